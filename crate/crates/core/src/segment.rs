//! SLIC superpixels over a multi-band raster and per-segment features.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::raster::{GeoTransform, LabelRaster, Raster};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SlicConfig {
    pub n_segments: usize,
    pub compactness: f64,
    pub max_iters: usize,
    pub enforce_connectivity: bool,
}

impl Default for SlicConfig {
    fn default() -> Self {
        SlicConfig {
            n_segments: 750_000,
            compactness: 0.1,
            max_iters: 10,
            enforce_connectivity: true,
        }
    }
}

impl SlicConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_segments == 0 || !(self.compactness > 0.0) || self.max_iters == 0 {
            return Err(Error::Config(format!(
                "SLIC needs n_segments >= 1, compactness > 0, max_iters >= 1: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentMap {
    pub width: usize,
    pub height: usize,
    /// Dense ids in `[0, count)`, row-major.
    pub labels: Vec<u32>,
    pub count: usize,
    pub sizes: Vec<usize>,
}

impl SegmentMap {
    fn from_labels(width: usize, height: usize, raw: &[usize]) -> Self {
        let mut remap = std::collections::HashMap::new();
        let labels: Vec<u32> = raw
            .iter()
            .map(|&l| {
                let next = remap.len() as u32;
                *remap.entry(l).or_insert(next)
            })
            .collect();
        let count = remap.len();
        let mut sizes = vec![0; count];
        for &l in &labels {
            sizes[l as usize] += 1;
        }
        SegmentMap {
            width,
            height,
            labels,
            count,
            sizes,
        }
    }

    pub fn label_at(&self, col: usize, row: usize) -> u32 {
        self.labels[row * self.width + col]
    }

    pub fn to_label_raster(&self, geo: GeoTransform) -> LabelRaster {
        LabelRaster {
            width: self.width,
            height: self.height,
            geo,
            labels: self.labels.iter().map(|&l| l as i32).collect(),
        }
    }

    pub fn from_label_raster(r: &LabelRaster) -> Result<Self> {
        if let Some(bad) = r.labels.iter().find(|&&l| l < 0) {
            return Err(Error::Label(format!("negative segment id {bad}")));
        }
        let raw: Vec<usize> = r.labels.iter().map(|&l| l as usize).collect();
        let count = raw.iter().max().map_or(0, |m| m + 1);
        let mut sizes = vec![0; count];
        for &l in &raw {
            sizes[l] += 1;
        }
        if sizes.contains(&0) {
            return Err(Error::Label("segment ids are not dense".into()));
        }
        Ok(SegmentMap {
            width: r.width,
            height: r.height,
            labels: raw.iter().map(|&l| l as u32).collect(),
            count,
            sizes,
        })
    }
}

/// Segmentation plus the k-means energy after each assignment step.
#[derive(Debug, Clone)]
pub struct SlicOutput {
    pub map: SegmentMap,
    pub energy: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Center {
    x: f64,
    y: f64,
    f: Vec<f64>,
}

/// Pixel-interleaved z-scored features; constant bands become zero.
fn zscore_features(r: &Raster) -> Vec<f64> {
    let (n, nb) = (r.pixel_count(), r.bands());
    let mut out = vec![0.0; n * nb];
    for b in 0..nb {
        let band = r.band(b);
        let mean = band.iter().map(|&v| v as f64).sum::<f64>() / n as f64;
        let var = band.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n as f64;
        let inv = if var > 0.0 { 1.0 / var.sqrt() } else { 0.0 };
        for (i, &v) in band.iter().enumerate() {
            out[i * nb + b] = (v as f64 - mean) * inv;
        }
    }
    out
}

pub fn slic(r: &Raster, cfg: &SlicConfig) -> Result<SegmentMap> {
    slic_with_energy(r, cfg).map(|o| o.map)
}

pub fn slic_with_energy(r: &Raster, cfg: &SlicConfig) -> Result<SlicOutput> {
    cfg.validate()?;
    let (w, h, nb) = (r.width(), r.height(), r.bands());
    let n = w * h;
    let k = cfg.n_segments;
    if k > n {
        return Err(Error::Config(format!("{k} segments requested for {n} pixels")));
    }
    let feats = zscore_features(r);
    let fpix = |i: usize| &feats[i * nb..(i + 1) * nb];
    let s = (n as f64 / k as f64).sqrt();
    let spatial = (cfg.compactness / s).powi(2);

    let mut centers = seed_centers(w, h, s, nb, &feats);
    let dist = |c: &Center, i: usize| -> f64 {
        let (x, y) = ((i % w) as f64, (i / w) as f64);
        let dc: f64 = c.f.iter().zip(fpix(i)).map(|(a, b)| (a - b) * (a - b)).sum();
        dc + ((x - c.x).powi(2) + (y - c.y).powi(2)) * spatial
    };

    let mut assign = vec![usize::MAX; n];
    let mut best = vec![f64::INFINITY; n];
    let mut energy = Vec::with_capacity(cfg.max_iters);
    for _ in 0..cfg.max_iters {
        for i in 0..n {
            best[i] = if assign[i] == usize::MAX {
                f64::INFINITY
            } else {
                dist(&centers[assign[i]], i)
            };
        }
        for (ci, c) in centers.iter().enumerate() {
            let x0 = (c.x - s).ceil().max(0.0) as usize;
            let x1 = ((c.x + s).floor() as isize).min(w as isize - 1);
            let y0 = (c.y - s).ceil().max(0.0) as usize;
            let y1 = ((c.y + s).floor() as isize).min(h as isize - 1);
            if x1 < 0 || y1 < 0 {
                continue;
            }
            for y in y0..=y1 as usize {
                for x in x0..=x1 as usize {
                    let i = y * w + x;
                    let d = dist(c, i);
                    if d < best[i] {
                        best[i] = d;
                        assign[i] = ci;
                    }
                }
            }
        }
        for i in 0..n {
            if assign[i] == usize::MAX {
                let (ci, d) = centers
                    .iter()
                    .enumerate()
                    .map(|(ci, c)| (ci, dist(c, i)))
                    .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
                assign[i] = ci;
                best[i] = d;
            }
        }
        energy.push(best.iter().sum());

        let mut acc = vec![(0.0f64, 0.0f64, vec![0.0f64; nb], 0usize); centers.len()];
        for i in 0..n {
            let a = &mut acc[assign[i]];
            a.0 += (i % w) as f64;
            a.1 += (i / w) as f64;
            for (s, v) in a.2.iter_mut().zip(fpix(i)) {
                *s += v;
            }
            a.3 += 1;
        }
        for (c, (sx, sy, sf, cnt)) in centers.iter_mut().zip(acc) {
            if cnt > 0 {
                let inv = 1.0 / cnt as f64;
                c.x = sx * inv;
                c.y = sy * inv;
                c.f = sf.into_iter().map(|v| v * inv).collect();
            }
        }
    }

    let raw = if cfg.enforce_connectivity {
        let min_size = s * s / 4.0;
        enforce_connectivity(w, h, &assign, min_size)
    } else {
        assign
    };
    Ok(SlicOutput {
        map: SegmentMap::from_labels(w, h, &raw),
        energy,
    })
}

/// Regular grid of about `(w/S) x (h/S)` seeds at cell centres, each moved to
/// the lowest-gradient pixel of its 3x3 neighbourhood when cells are at least
/// 3 pixels wide.
fn seed_centers(w: usize, h: usize, s: f64, nb: usize, feats: &[f64]) -> Vec<Center> {
    let nx = ((w as f64 / s).round() as usize).clamp(1, w);
    let ny = ((h as f64 / s).round() as usize).clamp(1, h);
    let (sx, sy) = (w as f64 / nx as f64, h as f64 / ny as f64);
    let f = |x: usize, y: usize| &feats[(y * w + x) * nb..(y * w + x + 1) * nb];
    let grad = |x: usize, y: usize| -> f64 {
        let (xl, xr) = (x.saturating_sub(1), (x + 1).min(w - 1));
        let (yu, yd) = (y.saturating_sub(1), (y + 1).min(h - 1));
        let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>();
        d(f(xr, y), f(xl, y)) + d(f(x, yd), f(x, yu))
    };
    let perturb = sx.min(sy) >= 3.0;
    let mut out = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let cx = (i as f64 + 0.5) * sx - 0.5;
            let cy = (j as f64 + 0.5) * sy - 0.5;
            let (mut px, mut py) = (cx.round() as usize, cy.round() as usize);
            let (mut x, mut y) = (cx, cy);
            if perturb {
                let mut g = grad(px, py);
                let (bx, by) = (px, py);
                for ny_ in by.saturating_sub(1)..=(by + 1).min(h - 1) {
                    for nx_ in bx.saturating_sub(1)..=(bx + 1).min(w - 1) {
                        let gn = grad(nx_, ny_);
                        if gn < g {
                            g = gn;
                            px = nx_;
                            py = ny_;
                        }
                    }
                }
                if (px, py) != (bx, by) {
                    x = px as f64;
                    y = py as f64;
                }
            }
            out.push(Center {
                x,
                y,
                f: f(px, py).to_vec(),
            });
        }
    }
    out
}

struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    fn new(sizes: Vec<usize>) -> Self {
        UnionFind {
            parent: (0..sizes.len()).collect(),
            size: sizes,
        }
    }

    fn find(&mut self, mut a: usize) -> usize {
        while self.parent[a] != a {
            self.parent[a] = self.parent[self.parent[a]];
            a = self.parent[a];
        }
        a
    }

    fn union_into(&mut self, small: usize, big: usize) {
        let (a, b) = (self.find(small), self.find(big));
        if a != b {
            self.parent[a] = b;
            self.size[b] += self.size[a];
        }
    }
}

/// 4-connected components of `labels`.
pub fn connected_components(w: usize, h: usize, labels: &[usize]) -> (Vec<usize>, usize) {
    let mut comp = vec![usize::MAX; w * h];
    let mut next = 0;
    let mut stack = Vec::new();
    for start in 0..w * h {
        if comp[start] != usize::MAX {
            continue;
        }
        comp[start] = next;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            let mut visit = |j: usize| {
                if comp[j] == usize::MAX && labels[j] == labels[start] {
                    comp[j] = next;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        next += 1;
    }
    (comp, next)
}

fn enforce_connectivity(w: usize, h: usize, labels: &[usize], min_size: f64) -> Vec<usize> {
    let (comp, count) = connected_components(w, h, labels);
    let mut sizes = vec![0usize; count];
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); count];
    for (i, &c) in comp.iter().enumerate() {
        sizes[c] += 1;
        members[c].push(i);
    }
    let mut order: Vec<usize> = (0..count).filter(|&c| (sizes[c] as f64) < min_size).collect();
    order.sort_by_key(|&c| (sizes[c], c));
    let mut uf = UnionFind::new(sizes);
    for c in order {
        let root = uf.find(c);
        if (uf.size[root] as f64) >= min_size {
            continue;
        }
        let mut target: Option<(usize, usize)> = None;
        for &i in &members[c] {
            let (x, y) = (i % w, i / w);
            let neighbours = [
                (x > 0).then(|| i - 1),
                (x + 1 < w).then(|| i + 1),
                (y > 0).then(|| i - w),
                (y + 1 < h).then(|| i + w),
            ];
            for j in neighbours.into_iter().flatten() {
                let r = uf.find(comp[j]);
                if r == root {
                    continue;
                }
                let size = uf.size[r];
                if target.is_none_or(|(_, s)| size > s) {
                    target = Some((r, size));
                }
            }
        }
        if let Some((t, _)) = target {
            uf.union_into(root, t);
        }
    }
    comp.iter().map(|&c| uf.find(c)).collect()
}

/// Which raster bands play red and near-infrared in NDVI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BandRoles {
    pub red: String,
    pub nir: String,
}

impl Default for BandRoles {
    fn default() -> Self {
        BandRoles {
            red: "B4".into(),
            nir: "B8".into(),
        }
    }
}

fn canonical_band(id: &str) -> String {
    let up = id.trim().to_ascii_uppercase();
    match up.strip_prefix('B') {
        Some(rest) if rest.starts_with(|c: char| c.is_ascii_digit()) => {
            let trimmed = rest.trim_start_matches('0');
            if trimmed.starts_with(|c: char| c.is_ascii_digit()) {
                format!("B{trimmed}")
            } else {
                format!("B{rest}")
            }
        }
        _ => up,
    }
}

/// Index of band `id` in `r`, matching `B04` to `B4` and ignoring case.
pub fn find_band(r: &Raster, id: &str) -> Result<usize> {
    let want = canonical_band(id);
    r.band_ids()
        .iter()
        .position(|b| canonical_band(b) == want)
        .ok_or_else(|| Error::Config(format!("band `{id}` not among {:?}", r.band_ids())))
}

pub const NDVI_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub names: Vec<String>,
    /// One row per segment id.
    pub rows: Vec<Vec<f64>>,
}

impl FeatureTable {
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Parse(format!("writing features: {e}"));
        let mut header = vec!["segment_id".to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header).map_err(io)?;
        for (id, row) in self.rows.iter().enumerate() {
            let mut rec = vec![id.to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(io)?;
        }
        w.flush().map_err(|e| Error::Parse(format!("writing features: {e}")))
    }
}

/// Per segment: mean and population std of every band, then mean NDVI.
pub fn superpixel_features(r: &Raster, s: &SegmentMap, roles: &BandRoles) -> Result<FeatureTable> {
    if (r.width(), r.height()) != (s.width, s.height) {
        return Err(Error::Shape(format!(
            "raster is {}x{}, segment map {}x{}",
            r.width(),
            r.height(),
            s.width,
            s.height
        )));
    }
    let (red, nir) = (find_band(r, &roles.red)?, find_band(r, &roles.nir)?);
    let nb = r.bands();
    let mut sum = vec![vec![0.0f64; nb]; s.count];
    let mut sq = vec![vec![0.0f64; nb]; s.count];
    let mut ndvi = vec![0.0f64; s.count];
    for b in 0..nb {
        for (i, &v) in r.band(b).iter().enumerate() {
            let l = s.labels[i] as usize;
            sum[l][b] += v as f64;
            sq[l][b] += (v as f64) * (v as f64);
        }
    }
    for (i, (&rv, &nv)) in r.band(red).iter().zip(r.band(nir)).enumerate() {
        let (rv, nv) = (rv as f64, nv as f64);
        ndvi[s.labels[i] as usize] += (nv - rv) / (nv + rv + NDVI_EPS);
    }
    let rows = (0..s.count)
        .map(|l| {
            let n = s.sizes[l] as f64;
            let means: Vec<f64> = sum[l].iter().map(|v| v / n).collect();
            let stds = sq[l].iter().zip(&means).map(|(q, m)| (q / n - m * m).max(0.0).sqrt());
            let mut row = means.clone();
            row.extend(stds);
            row.push(ndvi[l] / n);
            row
        })
        .collect();
    let mut names: Vec<String> = r.band_ids().iter().map(|b| format!("mean_{b}")).collect();
    names.extend(r.band_ids().iter().map(|b| format!("std_{b}")));
    names.push("ndvi".into());
    Ok(FeatureTable { names, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn raster(w: usize, h: usize, ids: &[&str], mut f: impl FnMut(usize, usize, usize) -> f32) -> Raster {
        let mut s = Vec::new();
        for b in 0..ids.len() {
            for y in 0..h {
                for x in 0..w {
                    s.push(f(b, x, y));
                }
            }
        }
        Raster::new(w, h, ids.iter().map(|s| s.to_string()).collect(), s, GeoTransform::identity()).unwrap()
    }

    fn cfg(k: usize, m: f64, conn: bool) -> SlicConfig {
        SlicConfig {
            n_segments: k,
            compactness: m,
            max_iters: 10,
            enforce_connectivity: conn,
        }
    }

    #[test]
    fn uniform_image_splits_into_quadrants() {
        let r = raster(100, 100, &["a", "b"], |_, _, _| 3.0);
        let s = slic(&r, &cfg(4, 0.1, true)).unwrap();
        assert_eq!(s.count, 4);
        assert_eq!(s.sizes, vec![2500; 4]);
        for y in 0..100 {
            for x in 0..100 {
                let q = (y / 50) * 2 + x / 50;
                assert_eq!(s.label_at(x, y) as usize, q);
            }
        }
    }

    #[test]
    fn one_pixel_per_segment() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let r = raster(7, 5, &["a"], |_, _, _| rng.random_range(0.0..1.0));
        let s = slic(&r, &cfg(35, 0.1, false)).unwrap();
        let mut seen = s.labels.clone();
        seen.sort();
        assert_eq!(seen, (0..35).collect::<Vec<u32>>());
    }

    #[test]
    fn too_many_segments_is_a_config_error() {
        let r = raster(4, 4, &["a"], |_, x, _| x as f32);
        assert!(matches!(slic(&r, &cfg(17, 0.1, true)), Err(Error::Config(_))));
        assert!(matches!(slic(&r, &cfg(4, 0.0, true)), Err(Error::Config(_))));
    }

    #[test]
    fn two_tone_boundary_follows_edge() {
        let r = raster(20, 10, &["a"], |_, x, _| if x < 10 { 0.0 } else { 1.0 });
        let s = slic(&r, &cfg(2, 0.01, true)).unwrap();
        assert_eq!(s.count, 2);
        for y in 0..10 {
            for x in 0..20 {
                assert_eq!(s.label_at(x, y) == s.label_at(0, 0), x < 10);
            }
        }
    }

    #[test]
    fn connectivity_merges_small_islands() {
        // One stray pixel of another label inside a large region.
        let mut labels = vec![0usize; 100];
        labels[55] = 1;
        let out = enforce_connectivity(10, 10, &labels, 4.0);
        assert!(out.iter().all(|&l| l == out[0]));
    }

    #[test]
    fn features_of_a_single_segment() {
        let r = raster(4, 3, &["B4", "B8"], |b, x, y| (b * 10 + x + y) as f32);
        let s = SegmentMap::from_labels(4, 3, &[0; 12]);
        let t = superpixel_features(&r, &s, &BandRoles::default()).unwrap();
        assert_eq!(t.names.len(), 5);
        let band = |b: usize| r.band(b).iter().map(|&v| v as f64).collect::<Vec<_>>();
        for b in 0..2 {
            let v = band(b);
            let mean = v.iter().sum::<f64>() / 12.0;
            let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 12.0).sqrt();
            assert!((t.rows[0][b] - mean).abs() < 1e-12);
            assert!((t.rows[0][2 + b] - std).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_segment_has_zero_std_and_roles_are_checked() {
        let r = raster(3, 3, &["B04", "B08"], |b, _, _| 2.0 + b as f32);
        let s = SegmentMap::from_labels(3, 3, &[0; 9]);
        let t = superpixel_features(&r, &s, &BandRoles::default()).unwrap();
        assert_eq!(&t.rows[0][2..4], &[0.0, 0.0]);
        assert!((t.rows[0][4] - 1.0 / (5.0 + 1e-6)).abs() < 1e-12);
        let bad = BandRoles {
            red: "B5".into(),
            ..BandRoles::default()
        };
        assert!(matches!(superpixel_features(&r, &s, &bad), Err(Error::Config(_))));
    }

    #[test]
    fn band_id_canonicalization() {
        assert_eq!(canonical_band("b04"), "B4");
        assert_eq!(canonical_band("B8A"), "B8A");
        assert_eq!(canonical_band("B10"), "B10");
        assert_eq!(canonical_band("nir"), "NIR");
    }

    #[test]
    fn csv_layout() {
        let t = FeatureTable {
            names: vec!["mean_a".into()],
            rows: vec![vec![1.5], vec![2.0]],
        };
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "segment_id,mean_a\n0,1.5\n1,2\n");
    }
}
