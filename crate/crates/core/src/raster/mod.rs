//! Georeferenced multi-band rasters and the operations the pipeline needs on
//! them: band merging, AOI cropping, normalization and file I/O.

mod geojson;
mod internal;
mod tiff;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use geojson::{parse_aoi_geojson, parse_point_features, read_aoi_geojson};
pub use internal::{
    internal_paths, probe_internal, read_internal, read_label_raster, write_internal,
    write_label_raster, LabelRaster, SampleType,
};
pub use tiff::{decode_tiff_band, encode_tiff_band, load_tiff_band, probe_tiff, TiffSampleKind};

/// Map-coordinate tolerance used when comparing geotransforms.
pub const GEO_TOLERANCE: f64 = 1e-6;

/// Affine pixel-to-map mapping for north-up rasters.
///
/// Pixel `(col, row)` has its top-left corner at
/// `(origin_x + col * pixel_size_x, origin_y + row * pixel_size_y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoTransform {
    pub origin_x: f64,
    pub origin_y: f64,
    pub pixel_size_x: f64,
    pub pixel_size_y: f64,
}

impl GeoTransform {
    pub fn new(origin_x: f64, origin_y: f64, pixel_size_x: f64, pixel_size_y: f64) -> Result<Self> {
        let geo = GeoTransform {
            origin_x,
            origin_y,
            pixel_size_x,
            pixel_size_y,
        };
        geo.validate()?;
        Ok(geo)
    }

    /// Pixel coordinates equal map coordinates.
    pub fn identity() -> Self {
        GeoTransform {
            origin_x: 0.0,
            origin_y: 0.0,
            pixel_size_x: 1.0,
            pixel_size_y: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.origin_x, self.origin_y, self.pixel_size_x, self.pixel_size_y]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.pixel_size_x == 0.0 || self.pixel_size_y == 0.0 {
            return Err(Error::Config(format!("invalid geotransform {self:?}")));
        }
        Ok(())
    }

    pub fn pixel_area(&self) -> f64 {
        (self.pixel_size_x * self.pixel_size_y).abs()
    }

    /// Map coordinates of the top-left corner of pixel `(col, row)`.
    pub fn pixel_to_map(&self, col: f64, row: f64) -> (f64, f64) {
        (
            self.origin_x + col * self.pixel_size_x,
            self.origin_y + row * self.pixel_size_y,
        )
    }

    /// Fractional pixel coordinates of a map position.
    pub fn map_to_pixel(&self, x: f64, y: f64) -> (f64, f64) {
        (
            (x - self.origin_x) / self.pixel_size_x,
            (y - self.origin_y) / self.pixel_size_y,
        )
    }

    /// Geotransform of the sub-grid starting at pixel `(col, row)`.
    pub fn shifted(&self, col: usize, row: usize) -> Self {
        let (origin_x, origin_y) = self.pixel_to_map(col as f64, row as f64);
        GeoTransform {
            origin_x,
            origin_y,
            ..*self
        }
    }

    pub fn approx_eq(&self, other: &GeoTransform, tol: f64) -> bool {
        (self.origin_x - other.origin_x).abs() <= tol
            && (self.origin_y - other.origin_y).abs() <= tol
            && (self.pixel_size_x - other.pixel_size_x).abs() <= tol
            && (self.pixel_size_y - other.pixel_size_y).abs() <= tol
    }
}

/// A single-band image without georeferencing, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Shape(format!(
                "plane {width}x{height} needs {} samples, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Plane {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Plane {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Plane {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    /// Sample with edge replication for out-of-range coordinates.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f32 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.data[y * self.width + x]
    }
}

/// Georeferenced multi-band raster with band-major `f32` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    band_ids: Vec<String>,
    samples: Vec<f32>,
    geo: GeoTransform,
}

impl Raster {
    pub fn new(
        width: usize,
        height: usize,
        band_ids: Vec<String>,
        samples: Vec<f32>,
        geo: GeoTransform,
    ) -> Result<Self> {
        if width == 0 || height == 0 || band_ids.is_empty() {
            return Err(Error::Shape(format!(
                "raster needs positive dimensions and at least one band, got {width}x{height}x{}",
                band_ids.len()
            )));
        }
        let expected = band_ids.len() * width * height;
        if samples.len() != expected {
            return Err(Error::Shape(format!(
                "raster {width}x{height}x{} needs {expected} samples, got {}",
                band_ids.len(),
                samples.len()
            )));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::NumericFault(format!("non-finite sample at index {i}")));
        }
        geo.validate()?;
        Ok(Raster {
            width,
            height,
            band_ids,
            samples,
            geo,
        })
    }

    /// Build a single-band raster from a plane.
    pub fn from_plane(plane: Plane, band_id: impl Into<String>, geo: GeoTransform) -> Result<Self> {
        Raster::new(plane.width, plane.height, vec![band_id.into()], plane.data, geo)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bands(&self) -> usize {
        self.band_ids.len()
    }

    pub fn band_ids(&self) -> &[String] {
        &self.band_ids
    }

    pub fn geo(&self) -> &GeoTransform {
        &self.geo
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn band(&self, b: usize) -> &[f32] {
        let n = self.pixel_count();
        &self.samples[b * n..(b + 1) * n]
    }

    pub fn band_plane(&self, b: usize) -> Plane {
        Plane {
            width: self.width,
            height: self.height,
            data: self.band(b).to_vec(),
        }
    }

    pub fn band_index(&self, id: &str) -> Option<usize> {
        self.band_ids.iter().position(|b| b == id)
    }

    #[inline]
    pub fn get(&self, band: usize, row: usize, col: usize) -> f32 {
        self.samples[(band * self.height + row) * self.width + col]
    }

    /// Per-pixel mean over all bands.
    pub fn band_mean(&self) -> Plane {
        let n = self.pixel_count();
        let mut acc = vec![0f64; n];
        for b in 0..self.bands() {
            for (a, &v) in acc.iter_mut().zip(self.band(b)) {
                *a += v as f64;
            }
        }
        let inv = 1.0 / self.bands() as f64;
        Plane {
            width: self.width,
            height: self.height,
            data: acc.into_iter().map(|a| (a * inv) as f32).collect(),
        }
    }

    /// Split into single-band rasters sharing this raster's geotransform.
    pub fn split_bands(&self) -> Vec<Raster> {
        (0..self.bands())
            .map(|b| Raster {
                width: self.width,
                height: self.height,
                band_ids: vec![self.band_ids[b].clone()],
                samples: self.band(b).to_vec(),
                geo: self.geo,
            })
            .collect()
    }

    /// Rectangular window `[col, col + width) x [row, row + height)`.
    pub fn window(&self, col: usize, row: usize, width: usize, height: usize) -> Result<Raster> {
        if width == 0 || height == 0 || col + width > self.width || row + height > self.height {
            return Err(Error::OutOfBounds(format!(
                "window {width}x{height} at ({col},{row}) exceeds raster {}x{}",
                self.width, self.height
            )));
        }
        let mut samples = Vec::with_capacity(self.bands() * width * height);
        for b in 0..self.bands() {
            for r in row..row + height {
                let start = (b * self.height + r) * self.width + col;
                samples.extend_from_slice(&self.samples[start..start + width]);
            }
        }
        Ok(Raster {
            width,
            height,
            band_ids: self.band_ids.clone(),
            samples,
            geo: self.geo.shifted(col, row),
        })
    }
}

/// Stack single- or multi-band rasters into one, preserving input band order.
pub fn merge_bands(bands: &[Raster]) -> Result<Raster> {
    let first = bands
        .first()
        .ok_or_else(|| Error::Alignment("no bands to merge".into()))?;
    let mut band_ids = Vec::new();
    let mut samples = Vec::new();
    for (i, r) in bands.iter().enumerate() {
        if r.width != first.width || r.height != first.height {
            return Err(Error::Alignment(format!(
                "band {i} is {}x{}, expected {}x{}",
                r.width, r.height, first.width, first.height
            )));
        }
        if !r.geo.approx_eq(&first.geo, GEO_TOLERANCE) {
            return Err(Error::Alignment(format!(
                "band {i} geotransform {:?} differs from {:?}",
                r.geo, first.geo
            )));
        }
        band_ids.extend(r.band_ids.iter().cloned());
        samples.extend_from_slice(&r.samples);
    }
    Ok(Raster {
        width: first.width,
        height: first.height,
        band_ids,
        samples,
        geo: first.geo,
    })
}

/// Closed exterior ring of an area of interest, in map coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct AoiPolygon {
    ring: Vec<(f64, f64)>,
}

/// Axis-aligned bounding box in map coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl BBox {
    pub fn area(&self) -> f64 {
        (self.max_x - self.min_x) * (self.max_y - self.min_y)
    }
}

impl AoiPolygon {
    pub fn new(ring: Vec<(f64, f64)>) -> Result<Self> {
        if ring.len() < 4 {
            return Err(Error::Parse(format!(
                "polygon ring needs at least 4 vertices, got {}",
                ring.len()
            )));
        }
        if ring.first() != ring.last() {
            return Err(Error::Parse("polygon ring is not closed".into()));
        }
        if ring.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::Parse("polygon ring has non-finite coordinates".into()));
        }
        let aoi = AoiPolygon { ring };
        let bb = aoi.bbox();
        if bb.max_x <= bb.min_x || bb.max_y <= bb.min_y {
            return Err(Error::Parse("polygon bounding box is degenerate".into()));
        }
        Ok(aoi)
    }

    /// Axis-aligned rectangle as a closed counter-clockwise ring.
    pub fn rectangle(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Result<Self> {
        AoiPolygon::new(vec![
            (min_x, min_y),
            (max_x, min_y),
            (max_x, max_y),
            (min_x, max_y),
            (min_x, min_y),
        ])
    }

    pub fn ring(&self) -> &[(f64, f64)] {
        &self.ring
    }

    pub fn bbox(&self) -> BBox {
        let mut bb = BBox {
            min_x: f64::INFINITY,
            min_y: f64::INFINITY,
            max_x: f64::NEG_INFINITY,
            max_y: f64::NEG_INFINITY,
        };
        for &(x, y) in &self.ring {
            bb.min_x = bb.min_x.min(x);
            bb.min_y = bb.min_y.min(y);
            bb.max_x = bb.max_x.max(x);
            bb.max_y = bb.max_y.max(y);
        }
        bb
    }

    /// Well-known-text rendering, e.g. `POLYGON((0 0, 1 0, 1 1, 0 0))`.
    pub fn to_wkt(&self) -> String {
        let coords: Vec<String> = self.ring.iter().map(|(x, y)| format!("{x} {y}")).collect();
        format!("POLYGON(({}))", coords.join(", "))
    }
}

// Snap tolerance in pixel units so bounding boxes that sit on pixel edges up to
// floating-point noise do not pull in an extra row or column.
const SNAP_EPS: f64 = 1e-6;

/// Crop to the AOI bounding box, snapping pixel edges outward.
pub fn crop_to_aoi(r: &Raster, aoi: &AoiPolygon) -> Result<Raster> {
    let bb = aoi.bbox();
    let (c0, r0) = r.geo.map_to_pixel(bb.min_x, bb.min_y);
    let (c1, r1) = r.geo.map_to_pixel(bb.max_x, bb.max_y);
    let col_lo = (c0.min(c1) + SNAP_EPS).floor().max(0.0);
    let col_hi = (c0.max(c1) - SNAP_EPS).ceil().min(r.width as f64);
    let row_lo = (r0.min(r1) + SNAP_EPS).floor().max(0.0);
    let row_hi = (r0.max(r1) - SNAP_EPS).ceil().min(r.height as f64);
    if col_hi <= col_lo || row_hi <= row_lo {
        return Err(Error::OutOfBounds(format!(
            "AOI bounding box {bb:?} does not intersect the raster extent"
        )));
    }
    r.window(
        col_lo as usize,
        row_lo as usize,
        (col_hi - col_lo) as usize,
        (row_hi - row_lo) as usize,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormalizeMode {
    ZScore,
    MinMax,
}

/// Result of [`normalize`]: the transformed raster plus any bands that could
/// not be normalized and were passed through unchanged.
#[derive(Debug)]
pub struct Normalized {
    pub raster: Raster,
    pub degenerate: Vec<Error>,
}

/// Per-band z-score or min-max normalization.
///
/// Constant bands cannot be normalized; they are left unchanged and reported
/// as [`Error::DegenerateBand`] entries in the result.
pub fn normalize(r: &Raster, mode: NormalizeMode) -> Normalized {
    let stats: Vec<BandStats> = (0..r.bands()).map(|b| BandStats::of(r.band(b))).collect();
    apply_normalization(r, &stats, mode)
}

/// Z-score two co-registered scenes with statistics pooled over both, so that
/// their radiometric relationship is preserved.
pub fn normalize_pair(a: &Raster, b: &Raster) -> Result<(Raster, Raster)> {
    if a.bands() != b.bands() {
        return Err(Error::Shape(format!(
            "scene band counts differ: {} vs {}",
            a.bands(),
            b.bands()
        )));
    }
    let stats: Vec<BandStats> = (0..a.bands())
        .map(|i| BandStats::of_iter(a.band(i).iter().chain(b.band(i))))
        .collect();
    let na = apply_normalization(a, &stats, NormalizeMode::ZScore);
    let nb = apply_normalization(b, &stats, NormalizeMode::ZScore);
    for e in na.degenerate.iter() {
        log::warn!("{e}");
    }
    Ok((na.raster, nb.raster))
}

#[derive(Debug, Clone, Copy)]
struct BandStats {
    mean: f64,
    std: f64,
    min: f64,
    max: f64,
}

impl BandStats {
    fn of(band: &[f32]) -> Self {
        Self::of_iter(band.iter())
    }

    fn of_iter<'a>(values: impl Iterator<Item = &'a f32> + Clone) -> Self {
        let mut n = 0usize;
        let mut sum = 0f64;
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for &v in values.clone() {
            let v = v as f64;
            n += 1;
            sum += v;
            min = min.min(v);
            max = max.max(v);
        }
        let mean = sum / n as f64;
        let var = values.map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n as f64;
        BandStats {
            mean,
            std: var.sqrt(),
            min,
            max,
        }
    }
}

fn apply_normalization(r: &Raster, stats: &[BandStats], mode: NormalizeMode) -> Normalized {
    let n = r.pixel_count();
    let mut samples = r.samples.clone();
    let mut degenerate = Vec::new();
    for (b, s) in stats.iter().enumerate() {
        let (offset, scale) = match mode {
            NormalizeMode::ZScore => (s.mean, s.std),
            NormalizeMode::MinMax => (s.min, s.max - s.min),
        };
        if !(scale > 0.0) {
            degenerate.push(Error::DegenerateBand {
                band: b,
                reason: "constant band cannot be normalized".into(),
            });
            continue;
        }
        for v in &mut samples[b * n..(b + 1) * n] {
            *v = ((*v as f64 - offset) / scale) as f32;
        }
    }
    for e in &degenerate {
        log::warn!("{e}");
    }
    Normalized {
        raster: Raster {
            samples,
            ..r.clone()
        },
        degenerate,
    }
}

/// Load a raster from a TIFF (`.tif`/`.tiff`) or the internal format.
pub fn read_raster(path: &Path) -> Result<Raster> {
    if is_tiff(path) {
        load_tiff_band(path)
    } else {
        read_internal(path)
    }
}

/// Width and height of a raster file without reading its samples.
pub fn probe_dims(path: &Path) -> Result<(usize, usize)> {
    if is_tiff(path) {
        probe_tiff(path)
    } else {
        probe_internal(path).map(|h| (h.width, h.height))
    }
}

fn is_tiff(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()),
        Some(ref e) if e == "tif" || e == "tiff"
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(width: usize, height: usize, bands: usize, geo: GeoTransform) -> Raster {
        let samples = (0..bands * width * height).map(|i| i as f32).collect();
        let ids = (0..bands).map(|b| format!("B{b}")).collect();
        Raster::new(width, height, ids, samples, geo).unwrap()
    }

    fn utm10() -> GeoTransform {
        GeoTransform::new(0.0, 1000.0, 10.0, -10.0).unwrap()
    }

    #[test]
    fn geotransform_rejects_zero_pixel_size() {
        assert!(GeoTransform::new(0.0, 0.0, 0.0, -10.0).is_err());
        assert!(GeoTransform::new(0.0, 0.0, 10.0, 0.0).is_err());
        assert_eq!(utm10().pixel_area(), 100.0);
    }

    #[test]
    fn raster_rejects_bad_sample_count_and_nan() {
        let geo = utm10();
        assert!(Raster::new(2, 2, vec!["B1".into()], vec![0.0; 3], geo).is_err());
        assert!(Raster::new(1, 1, vec!["B1".into()], vec![f32::NAN], geo).is_err());
    }

    #[test]
    fn merge_preserves_band_order() {
        let geo = utm10();
        let bands: Vec<Raster> = ["B2", "B3", "B4", "B8"]
            .iter()
            .enumerate()
            .map(|(i, id)| Raster::new(3, 2, vec![id.to_string()], vec![i as f32; 6], geo).unwrap())
            .collect();
        let merged = merge_bands(&bands).unwrap();
        assert_eq!(merged.bands(), 4);
        assert_eq!(merged.band_ids(), &["B2", "B3", "B4", "B8"]);
        for b in 0..4 {
            assert!(merged.band(b).iter().all(|&v| v == b as f32));
        }
    }

    #[test]
    fn merge_single_band_is_identity() {
        let r = ramp(4, 3, 1, utm10());
        assert_eq!(merge_bands(std::slice::from_ref(&r)).unwrap(), r);
    }

    #[test]
    fn merge_rejects_mismatched_width_and_geo() {
        let a = ramp(4, 3, 1, utm10());
        let b = ramp(5, 3, 1, utm10());
        assert!(matches!(merge_bands(&[a.clone(), b]), Err(Error::Alignment(_))));
        let c = ramp(4, 3, 1, GeoTransform::new(10.0, 1000.0, 10.0, -10.0).unwrap());
        assert!(matches!(merge_bands(&[a, c]), Err(Error::Alignment(_))));
    }

    #[test]
    fn merge_of_split_reproduces_raster() {
        let r = ramp(5, 4, 3, utm10());
        assert_eq!(merge_bands(&r.split_bands()).unwrap(), r);
    }

    #[test]
    fn crop_shifts_origin_and_snaps_outward() {
        let r = ramp(100, 100, 1, utm10());
        // x in [100, 300), y spans rows 2..5 (map y 980 down to 950).
        let aoi = AoiPolygon::rectangle(100.0, 952.0, 300.0, 980.0).unwrap();
        let c = crop_to_aoi(&r, &aoi).unwrap();
        assert_eq!(c.width(), 20);
        assert_eq!(c.height(), 3);
        assert_eq!(c.geo().origin_x, 100.0);
        assert_eq!(c.geo().origin_y, 980.0);
        assert_eq!(c.get(0, 0, 0), r.get(0, 2, 10));
        assert_eq!(c.geo().pixel_area(), r.geo().pixel_area());
    }

    #[test]
    fn crop_full_extent_is_identity_and_idempotent() {
        let r = ramp(30, 20, 2, utm10());
        let full = AoiPolygon::rectangle(0.0, 800.0, 300.0, 1000.0).unwrap();
        assert_eq!(crop_to_aoi(&r, &full).unwrap(), r);
        let aoi = AoiPolygon::rectangle(33.0, 870.0, 141.0, 955.5).unwrap();
        let once = crop_to_aoi(&r, &aoi).unwrap();
        assert_eq!(crop_to_aoi(&once, &aoi).unwrap(), once);
    }

    #[test]
    fn crop_outside_extent_fails() {
        let r = ramp(10, 10, 1, utm10());
        let aoi = AoiPolygon::rectangle(500.0, 0.0, 600.0, 100.0).unwrap();
        assert!(matches!(crop_to_aoi(&r, &aoi), Err(Error::OutOfBounds(_))));
    }

    #[test]
    fn aoi_validation() {
        assert!(AoiPolygon::new(vec![(0.0, 0.0), (1.0, 0.0), (0.0, 0.0)]).is_err());
        assert!(AoiPolygon::new(vec![(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]).is_err());
        assert!(AoiPolygon::new(vec![(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (0.0, 0.0)]).is_err());
        let sq = AoiPolygon::rectangle(0.0, 0.0, 2.0, 3.0).unwrap();
        assert_eq!(sq.bbox().area(), 6.0);
        assert_eq!(sq.to_wkt(), "POLYGON((0 0, 2 0, 2 3, 0 3, 0 0))");
    }

    #[test]
    fn minmax_normalization() {
        let r = Raster::new(4, 1, vec!["B".into()], vec![0.0, 2.0, 4.0, 6.0], utm10()).unwrap();
        let n = normalize(&r, NormalizeMode::MinMax);
        assert!(n.degenerate.is_empty());
        let expect = [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0];
        for (v, e) in n.raster.samples().iter().zip(expect) {
            assert!((v - e).abs() < 1e-7);
        }
    }

    #[test]
    fn zscore_two_values() {
        let r = Raster::new(2, 1, vec!["B".into()], vec![1.0, 3.0], utm10()).unwrap();
        let n = normalize(&r, NormalizeMode::ZScore);
        assert_eq!(n.raster.samples(), &[-1.0, 1.0]);
    }

    #[test]
    fn zscore_constant_band_is_reported_and_unchanged() {
        let r = Raster::new(
            2,
            2,
            vec!["A".into(), "B".into()],
            vec![5.0, 5.0, 5.0, 5.0, 1.0, 2.0, 3.0, 4.0],
            utm10(),
        )
        .unwrap();
        let n = normalize(&r, NormalizeMode::ZScore);
        assert_eq!(n.degenerate.len(), 1);
        assert!(matches!(n.degenerate[0], Error::DegenerateBand { band: 0, .. }));
        assert_eq!(n.raster.band(0), &[5.0; 4]);
    }
}
