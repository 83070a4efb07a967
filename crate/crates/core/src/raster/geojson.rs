//! Minimal geoJSON ingestion: a single Polygon's exterior ring for the AOI and
//! Point features for training samples.

use std::path::Path;

use serde_json::{Map, Value};

use super::AoiPolygon;
use crate::{Error, Result};

/// Parse an AOI from a Polygon geometry, a Feature wrapping one, or a
/// FeatureCollection whose first feature is one. Holes and MultiPolygons are
/// rejected.
pub fn parse_aoi_geojson(text: &str) -> Result<AoiPolygon> {
    let doc: Value = serde_json::from_str(text).map_err(|e| Error::Parse(format!("geoJSON: {e}")))?;
    let geometry = find_geometry(&doc)?;
    match type_of(geometry)? {
        "Polygon" => {}
        "MultiPolygon" => {
            return Err(Error::UnsupportedFormat("MultiPolygon AOI; expected one Polygon".into()))
        }
        t => return Err(Error::Parse(format!("expected Polygon geometry, found {t}"))),
    }
    let rings = geometry
        .get("coordinates")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Parse("Polygon without coordinates array".into()))?;
    match rings.len() {
        0 => return Err(Error::Parse("Polygon has no rings".into())),
        1 => {}
        n => {
            return Err(Error::UnsupportedFormat(format!(
                "Polygon with {} interior ring(s)",
                n - 1
            )))
        }
    }
    let ring = rings[0]
        .as_array()
        .ok_or_else(|| Error::Parse("ring is not an array".into()))?
        .iter()
        .map(position)
        .collect::<Result<Vec<_>>>()?;
    AoiPolygon::new(ring)
}

pub fn read_aoi_geojson(path: &Path) -> Result<AoiPolygon> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_aoi_geojson(&text)
}

/// Point features of a FeatureCollection with their property maps.
pub fn parse_point_features(text: &str) -> Result<Vec<((f64, f64), Map<String, Value>)>> {
    let doc: Value = serde_json::from_str(text).map_err(|e| Error::Parse(format!("geoJSON: {e}")))?;
    if type_of(&doc)? != "FeatureCollection" {
        return Err(Error::Parse("expected a FeatureCollection of points".into()));
    }
    let features = doc
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Parse("FeatureCollection without features".into()))?;
    features
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let geometry = f
                .get("geometry")
                .ok_or_else(|| Error::Parse(format!("feature {i} has no geometry")))?;
            if type_of(geometry)? != "Point" {
                return Err(Error::Parse(format!("feature {i} is not a Point")));
            }
            let xy = position(
                geometry
                    .get("coordinates")
                    .ok_or_else(|| Error::Parse(format!("feature {i} has no coordinates")))?,
            )?;
            let props = f
                .get("properties")
                .and_then(Value::as_object)
                .cloned()
                .unwrap_or_default();
            Ok((xy, props))
        })
        .collect()
}

fn type_of(v: &Value) -> Result<&str> {
    v.get("type")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::Parse("geoJSON object without a type".into()))
}

fn find_geometry(doc: &Value) -> Result<&Value> {
    match type_of(doc)? {
        "Feature" => doc
            .get("geometry")
            .ok_or_else(|| Error::Parse("Feature without geometry".into())),
        "FeatureCollection" => {
            let first = doc
                .get("features")
                .and_then(Value::as_array)
                .and_then(|fs| fs.first())
                .ok_or_else(|| Error::Parse("empty FeatureCollection".into()))?;
            find_geometry(first)
        }
        _ => Ok(doc),
    }
}

fn position(v: &Value) -> Result<(f64, f64)> {
    let arr = v
        .as_array()
        .filter(|a| a.len() >= 2)
        .ok_or_else(|| Error::Parse(format!("bad position {v}")))?;
    match (arr[0].as_f64(), arr[1].as_f64()) {
        (Some(x), Some(y)) => Ok((x, y)),
        _ => Err(Error::Parse(format!("non-numeric position {v}"))),
    }
}
