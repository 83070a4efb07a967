//! Confusion counts, agreement scores and changed-area statistics.
//!
//! The positive class is "change" (label 1). Ratios whose denominator is zero
//! are reported as [`Metric::Undefined`] with the reason instead of NaN.

use serde::{Serialize, Serializer};

use crate::raster::GeoTransform;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        Confusion { tp, fp, fn_, tn }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Tally one prediction against its reference label.
    pub fn record(&mut self, predicted_positive: bool, actually_positive: bool) {
        match (predicted_positive, actually_positive) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }
}

impl std::ops::Add for Confusion {
    type Output = Confusion;

    fn add(self, o: Confusion) -> Confusion {
        Confusion::new(self.tp + o.tp, self.fp + o.fp, self.fn_ + o.fn_, self.tn + o.tn)
    }
}

/// Pixel-wise confusion of a binary prediction against a binary reference.
pub fn confusion(pred: &[u8], truth: &[u8]) -> Result<Confusion> {
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!(
            "prediction has {} pixels, reference {}",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Shape("empty maps".into()));
    }
    let mut c = Confusion::default();
    for (i, (&p, &t)) in pred.iter().zip(truth).enumerate() {
        if p > 1 || t > 1 {
            return Err(Error::Label(format!(
                "non-binary value at pixel {i}: prediction {p}, reference {t}"
            )));
        }
        c.record(p == 1, t == 1);
    }
    Ok(c)
}

/// A ratio that may be undefined for degenerate confusion matrices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metric {
    Value(f64),
    Undefined(&'static str),
}

impl Metric {
    pub fn value(&self) -> Option<f64> {
        match self {
            Metric::Value(v) => Some(*v),
            Metric::Undefined(_) => None,
        }
    }

    fn ratio(num: f64, den: f64, reason: &'static str) -> Metric {
        if den > 0.0 {
            Metric::Value(num / den)
        } else {
            Metric::Undefined(reason)
        }
    }
}

impl Serialize for Metric {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        match self {
            Metric::Value(v) => s.serialize_f64(*v),
            Metric::Undefined(reason) => {
                let mut m = s.serialize_map(Some(1))?;
                m.serialize_entry("undefined", reason)?;
                m.end()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreReport {
    pub confusion: Confusion,
    pub overall_accuracy: f64,
    pub kappa: Metric,
    pub recall: Metric,
    pub precision: Metric,
    pub f1: Metric,
}

pub fn scores(c: &Confusion) -> Result<ScoreReport> {
    let n = c.total() as f64;
    if n == 0.0 {
        return Err(Error::Shape("confusion matrix is empty".into()));
    }
    let (tp, fp, fn_, tn) = (c.tp as f64, c.fp as f64, c.fn_ as f64, c.tn as f64);
    let p_o = (tp + tn) / n;
    let p_e = ((tp + fp) * (tp + fn_) + (fn_ + tn) * (fp + tn)) / (n * n);
    let kappa = Metric::ratio(p_o - p_e, 1.0 - p_e, "chance agreement is total");
    let precision = Metric::ratio(tp, tp + fp, "no predicted positives");
    let recall = Metric::ratio(tp, tp + fn_, "no actual positives");
    let f1 = match (precision, recall) {
        (Metric::Value(p), Metric::Value(r)) => f1_score(p, r),
        (Metric::Undefined(why), _) | (_, Metric::Undefined(why)) => Metric::Undefined(why),
    };
    Ok(ScoreReport {
        confusion: *c,
        overall_accuracy: p_o,
        kappa,
        recall,
        precision,
        f1,
    })
}

/// Harmonic mean of precision and recall.
pub fn f1_score(precision: f64, recall: f64) -> Metric {
    Metric::ratio(2.0 * precision * recall, precision + recall, "precision and recall are zero")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AreaStats {
    pub changed_pixels: u64,
    pub total_pixels: u64,
    pub pixel_area_m2: f64,
    pub area_m2: f64,
    pub fraction: f64,
}

/// Changed area of a binary map: label-1 pixel count times pixel area.
pub fn changed_area(labels: &[u8], geo: &GeoTransform) -> Result<AreaStats> {
    if labels.is_empty() {
        return Err(Error::Shape("empty change map".into()));
    }
    let changed = labels.iter().filter(|&&l| l == 1).count() as u64;
    let total = labels.len() as u64;
    let pixel_area = geo.pixel_area();
    Ok(AreaStats {
        changed_pixels: changed,
        total_pixels: total,
        pixel_area_m2: pixel_area,
        area_m2: changed as f64 * pixel_area,
        fraction: changed as f64 / total as f64,
    })
}
