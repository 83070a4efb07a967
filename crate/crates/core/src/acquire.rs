//! Acquisition queries against an OpenSearch-style product catalog and parsing
//! of its JSON responses.
//!
//! No network I/O happens here. Retrieval goes through [`CatalogFetch`]; the
//! CLI and tests plug in recorded responses via [`FixtureFetch`].

use std::path::PathBuf;

use chrono::{DateTime, NaiveDate, Utc};
use serde::Serialize;
use serde_json::Value;

use crate::raster::AoiPolygon;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionQuery {
    footprint: AoiPolygon,
    date_start: NaiveDate,
    date_end: NaiveDate,
    platform: String,
    product_type: String,
    cloud_min: f64,
    cloud_max: f64,
}

impl AcquisitionQuery {
    pub fn new(
        footprint: AoiPolygon,
        date_start: NaiveDate,
        date_end: NaiveDate,
        platform: impl Into<String>,
        product_type: impl Into<String>,
        cloud_min: f64,
        cloud_max: f64,
    ) -> Result<Self> {
        if date_start > date_end {
            return Err(Error::Config(format!(
                "sensing window starts {date_start} after it ends {date_end}"
            )));
        }
        if !(0.0..=100.0).contains(&cloud_min)
            || !(0.0..=100.0).contains(&cloud_max)
            || cloud_min > cloud_max
        {
            return Err(Error::Config(format!(
                "cloud-cover bounds [{cloud_min}, {cloud_max}] must satisfy 0 <= min <= max <= 100"
            )));
        }
        Ok(AcquisitionQuery {
            footprint,
            date_start,
            date_end,
            platform: platform.into(),
            product_type: product_type.into(),
            cloud_min,
            cloud_max,
        })
    }

    pub fn cloud_max(&self) -> f64 {
        self.cloud_max
    }
}

/// Render the query in the hub's OpenSearch text syntax. The string is not
/// URL-encoded; that happens at the fetch boundary.
pub fn build_query(q: &AcquisitionQuery) -> String {
    format!(
        "footprint:\"Intersects({})\" AND beginposition:[{}T00:00:00Z TO {}T23:59:59Z] \
         AND platformname:{} AND producttype:{} AND cloudcoverpercentage:[{} TO {}]",
        q.footprint.to_wkt(),
        q.date_start.format("%Y-%m-%d"),
        q.date_end.format("%Y-%m-%d"),
        q.platform,
        q.product_type,
        q.cloud_min,
        q.cloud_max,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProductRecord {
    pub id: String,
    pub title: String,
    pub sensing_date: DateTime<Utc>,
    pub cloud_cover: f64,
    pub footprint_wkt: String,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ProductList {
    pub records: Vec<ProductRecord>,
    /// Entries that were skipped because a required field was missing.
    pub warnings: Vec<String>,
}

/// Parse a catalog response, dropping entries above `cloud_max` and sorting
/// the rest by sensing date.
pub fn parse_products(response: &str, cloud_max: f64) -> Result<ProductList> {
    let doc: Value = serde_json::from_str(response)
        .map_err(|e| Error::Parse(format!("catalog response: {e}")))?;
    let feed = doc
        .get("feed")
        .ok_or_else(|| Error::Parse("catalog response has no `feed`".into()))?;
    // The hub returns a bare object instead of a list when there is one entry.
    let entries: Vec<&Value> = match feed.get("entry") {
        None | Some(Value::Null) => Vec::new(),
        Some(Value::Array(items)) => items.iter().collect(),
        Some(obj @ Value::Object(_)) => vec![obj],
        Some(other) => return Err(Error::Parse(format!("unexpected `entry` value {other}"))),
    };

    let mut out = ProductList::default();
    for (i, entry) in entries.into_iter().enumerate() {
        let id = text_field(entry, "id")
            .ok_or_else(|| Error::Parse(format!("entry {i} has no id")))?;
        let title = text_field(entry, "title").unwrap_or_default();
        let date_text = named(entry, "date", "beginposition")
            .ok_or_else(|| Error::Parse(format!("entry {id} has no beginposition")))?;
        let sensing_date = DateTime::parse_from_rfc3339(&date_text)
            .map_err(|e| Error::Parse(format!("entry {id}: bad date {date_text}: {e}")))?
            .with_timezone(&Utc);
        let cloud_cover = match named(entry, "double", "cloudcoverpercentage") {
            Some(text) => text
                .parse::<f64>()
                .ok()
                .filter(|c| (0.0..=100.0).contains(c))
                .ok_or_else(|| Error::Parse(format!("entry {id}: bad cloud cover {text}")))?,
            None => {
                let msg = format!("entry {id} has no cloudcoverpercentage; skipped");
                log::warn!("{msg}");
                out.warnings.push(msg);
                continue;
            }
        };
        if cloud_cover > cloud_max {
            continue;
        }
        let footprint_wkt = named(entry, "str", "footprint").unwrap_or_default();
        out.records.push(ProductRecord {
            id,
            title,
            sensing_date,
            cloud_cover,
            footprint_wkt,
        });
    }
    out.records.sort_by_key(|a| a.sensing_date);
    Ok(out)
}

fn text_field(entry: &Value, key: &str) -> Option<String> {
    entry.get(key).and_then(Value::as_str).map(str::to_string)
}

/// Look up `{"name": name, "content": ...}` inside the typed attribute list
/// `group` (`date`, `double`, `str`, ...), which may be a list or one object.
fn named(entry: &Value, group: &str, name: &str) -> Option<String> {
    let items: Vec<&Value> = match entry.get(group)? {
        Value::Array(items) => items.iter().collect(),
        obj @ Value::Object(_) => vec![obj],
        _ => return None,
    };
    items
        .into_iter()
        .find(|v| v.get("name").and_then(Value::as_str) == Some(name))
        .and_then(|v| match v.get("content")? {
            Value::String(s) => Some(s.clone()),
            Value::Number(n) => Some(n.to_string()),
            _ => None,
        })
}

/// Source of catalog responses for a query string.
pub trait CatalogFetch {
    fn fetch(&self, query: &str) -> Result<String>;
}

/// Replays a recorded response regardless of the query.
#[derive(Debug, Clone)]
pub struct FixtureFetch {
    pub path: PathBuf,
}

impl CatalogFetch for FixtureFetch {
    fn fetch(&self, _query: &str) -> Result<String> {
        std::fs::read_to_string(&self.path).map_err(|e| Error::io(&self.path, e))
    }
}

/// Build the query, fetch, and parse with the query's cloud ceiling.
pub fn search(q: &AcquisitionQuery, fetcher: &dyn CatalogFetch) -> Result<ProductList> {
    let response = fetcher.fetch(&build_query(q))?;
    parse_products(&response, q.cloud_max)
}
