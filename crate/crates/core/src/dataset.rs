//! Manifest-driven loading of labeled scene pairs and patch sampling.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::raster::{normalize_pair, probe_dims, read_raster, Raster};
use crate::{Error, Result};

pub const DEFAULT_BANDS: usize = 13;

/// Band file names of an OSCD scene in manifest order.
pub const OSCD_BANDS: [&str; 13] = [
    "B01", "B02", "B03", "B04", "B05", "B06", "B07", "B08", "B8A", "B09", "B10", "B11", "B12",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split `{other}` (expected train or test)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub region: String,
    pub t1: Vec<PathBuf>,
    pub t2: Vec<PathBuf>,
    pub label: PathBuf,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn entries_in(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

/// Load and validate a manifest expecting 13 bands per epoch.
pub fn load_manifest(path: &Path) -> Result<Manifest> {
    load_manifest_with(path, DEFAULT_BANDS)
}

/// Load a manifest, resolve its paths against the manifest's directory and
/// check that every referenced raster opens with consistent dimensions.
pub fn load_manifest_with(path: &Path, expected_bands: usize) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut m: Manifest = serde_json::from_str(&text).map_err(|e| Error::Manifest {
        region: String::new(),
        path: path.to_path_buf(),
        reason: format!("invalid manifest JSON: {e}"),
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    for e in &mut m.entries {
        for p in e.t1.iter_mut().chain(e.t2.iter_mut()).chain(std::iter::once(&mut e.label)) {
            *p = base.join(&*p);
        }
    }
    validate_manifest(&m, expected_bands)?;
    Ok(m)
}

pub fn validate_manifest(m: &Manifest, expected_bands: usize) -> Result<()> {
    if m.entries.is_empty() {
        return Err(Error::Manifest {
            region: String::new(),
            path: PathBuf::new(),
            reason: "manifest has no entries".into(),
        });
    }
    for e in &m.entries {
        let err = |path: &Path, reason: String| Error::Manifest {
            region: e.region.clone(),
            path: path.to_path_buf(),
            reason,
        };
        for (name, paths) in [("t1", &e.t1), ("t2", &e.t2)] {
            if paths.len() != expected_bands {
                return Err(err(
                    Path::new(name),
                    format!("{} band paths for {name}, expected {expected_bands}", paths.len()),
                ));
            }
        }
        let dims = probe_dims(&e.label).map_err(|x| err(&e.label, x.to_string()))?;
        for p in e.t1.iter().chain(&e.t2) {
            let d = probe_dims(p).map_err(|x| err(p, x.to_string()))?;
            if d != dims {
                return Err(err(
                    p,
                    format!("band is {}x{}, label is {}x{}", d.0, d.1, dims.0, dims.1),
                ));
            }
        }
    }
    Ok(())
}

/// One scene pair held in memory, z-scored with statistics pooled over both
/// epochs, with a binary label mask.
#[derive(Debug, Clone)]
pub struct RegionData {
    pub region: String,
    pub a: Raster,
    pub b: Raster,
    pub label: Vec<u8>,
}

impl RegionData {
    pub fn new(region: impl Into<String>, a: Raster, b: Raster, label: Vec<u8>) -> Result<Self> {
        if (a.width(), a.height(), a.bands()) != (b.width(), b.height(), b.bands()) {
            return Err(Error::Shape("scene pair dimensions differ".into()));
        }
        if label.len() != a.pixel_count() {
            return Err(Error::Shape(format!(
                "label has {} pixels, scenes have {}",
                label.len(),
                a.pixel_count()
            )));
        }
        Ok(RegionData {
            region: region.into(),
            a,
            b,
            label,
        })
    }

    pub fn width(&self) -> usize {
        self.a.width()
    }

    pub fn height(&self) -> usize {
        self.a.height()
    }
}

fn stack(region: &str, paths: &[PathBuf]) -> Result<Raster> {
    let mut ids = Vec::new();
    let mut samples = Vec::new();
    let mut first: Option<Raster> = None;
    for p in paths {
        let r = read_raster(p)?;
        if let Some(f) = &first {
            if (f.width(), f.height()) != (r.width(), r.height()) {
                return Err(Error::Manifest {
                    region: region.into(),
                    path: p.clone(),
                    reason: "band dimensions differ within the scene".into(),
                });
            }
        }
        ids.extend(r.band_ids().iter().cloned());
        samples.extend_from_slice(r.samples());
        first.get_or_insert(r);
    }
    let f = first.ok_or_else(|| Error::Manifest {
        region: region.into(),
        path: PathBuf::new(),
        reason: "no band paths".into(),
    })?;
    Raster::new(f.width(), f.height(), ids, samples, *f.geo())
}

pub fn read_binary_labels(path: &Path) -> Result<Vec<u8>> {
    let r = read_raster(path)?;
    Ok(r.band(0).iter().map(|&v| (v != 0.0) as u8).collect())
}

pub fn load_region(e: &ManifestEntry) -> Result<RegionData> {
    let a = stack(&e.region, &e.t1)?;
    let b = stack(&e.region, &e.t2)?;
    let (a, b) = normalize_pair(&a, &b)?;
    let label = read_binary_labels(&e.label)?;
    RegionData::new(e.region.clone(), a, b, label)
}

pub fn load_split(m: &Manifest, split: Split) -> Result<Vec<RegionData>> {
    let regions: Vec<RegionData> = m.entries_in(split).map(load_region).collect::<Result<_>>()?;
    if regions.is_empty() {
        return Err(Error::DegenerateSplit(format!("no {split:?} entries in the manifest")));
    }
    Ok(regions)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchPair {
    /// `(bands, patch, patch)` row-major.
    pub a: Vec<f32>,
    pub b: Vec<f32>,
    /// `(patch, patch)` in `{0, 1}`.
    pub label: Vec<u8>,
    pub bands: usize,
    pub patch: usize,
    pub region: String,
    /// `(col, row)` of the patch's top-left pixel.
    pub offset: (usize, usize),
}

impl PatchPair {
    pub fn extract(r: &RegionData, col: usize, row: usize, patch: usize) -> Self {
        let w = r.width();
        let cut = |s: &Raster| {
            let mut out = Vec::with_capacity(s.bands() * patch * patch);
            for band in 0..s.bands() {
                let data = s.band(band);
                for y in row..row + patch {
                    out.extend_from_slice(&data[y * w + col..][..patch]);
                }
            }
            out
        };
        let mut label = Vec::with_capacity(patch * patch);
        for y in row..row + patch {
            label.extend_from_slice(&r.label[y * w + col..][..patch]);
        }
        PatchPair {
            a: cut(&r.a),
            b: cut(&r.b),
            label,
            bands: r.a.bands(),
            patch,
            region: r.region.clone(),
            offset: (col, row),
        }
    }

    pub fn has_change(&self) -> bool {
        self.label.contains(&1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleSpec {
    pub patch: usize,
    pub count: usize,
    pub balance_fraction: f64,
    pub seed: u64,
}

/// Load the split's regions and draw patches from them.
pub fn sample_patches(
    m: &Manifest,
    split: Split,
    patch: usize,
    count: usize,
    balance_fraction: f64,
    seed: u64,
) -> Result<Vec<PatchPair>> {
    let regions = load_split(m, split)?;
    sample_from_regions(
        &regions,
        &SampleSpec {
            patch,
            count,
            balance_fraction,
            seed,
        },
    )
}

/// Draw `count` patches. A `round(balance_fraction * count)` share is drawn
/// by picking a change pixel uniformly and then an offset uniformly among the
/// windows containing it; the rest use uniform offsets in a uniformly chosen
/// region. The result is shuffled.
pub fn sample_from_regions(regions: &[RegionData], spec: &SampleSpec) -> Result<Vec<PatchPair>> {
    let p = spec.patch;
    if p < 2 || !p.is_multiple_of(2) {
        return Err(Error::Config(format!("patch size {p} must be even and >= 2")));
    }
    if spec.count == 0 {
        return Err(Error::Config("patch count must be >= 1".into()));
    }
    if !(0.0..=1.0).contains(&spec.balance_fraction) {
        return Err(Error::Config(format!(
            "balance fraction {} outside [0, 1]",
            spec.balance_fraction
        )));
    }
    let usable: Vec<&RegionData> = regions
        .iter()
        .filter(|r| r.width() >= p && r.height() >= p)
        .collect();
    if usable.is_empty() {
        return Err(Error::Config(format!("no region is at least {p}x{p}")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_bal = (spec.balance_fraction * spec.count as f64).round() as usize;
    let mut out = Vec::with_capacity(spec.count);

    if n_bal > 0 {
        let changes: Vec<Vec<usize>> = usable
            .iter()
            .map(|r| (0..r.label.len()).filter(|&i| r.label[i] == 1).collect())
            .collect();
        let total: usize = changes.iter().map(Vec::len).sum();
        if total == 0 {
            return Err(Error::Balance(
                "no change pixels in the split but a balanced share was requested".into(),
            ));
        }
        for _ in 0..n_bal {
            let mut k = rng.random_range(0..total);
            let ri = changes.iter().position(|c| {
                if k < c.len() {
                    true
                } else {
                    k -= c.len();
                    false
                }
            });
            let ri = ri.expect("k < total");
            let r = usable[ri];
            let idx = changes[ri][k];
            let (cx, cy) = (idx % r.width(), idx / r.width());
            let col = rng.random_range(cx.saturating_sub(p - 1)..=cx.min(r.width() - p));
            let row = rng.random_range(cy.saturating_sub(p - 1)..=cy.min(r.height() - p));
            out.push(PatchPair::extract(r, col, row, p));
        }
    }
    for _ in n_bal..spec.count {
        let r = usable[rng.random_range(0..usable.len())];
        let col = rng.random_range(0..=r.width() - p);
        let row = rng.random_range(0..=r.height() - p);
        out.push(PatchPair::extract(r, col, row, p));
    }
    out.shuffle(&mut rng);
    Ok(out)
}

/// The eight symmetries of the square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dihedral {
    Identity,
    Rot90,
    Rot180,
    Rot270,
    FlipH,
    FlipV,
    Transpose,
    AntiTranspose,
}

impl Dihedral {
    pub const ALL: [Dihedral; 8] = [
        Dihedral::Identity,
        Dihedral::Rot90,
        Dihedral::Rot180,
        Dihedral::Rot270,
        Dihedral::FlipH,
        Dihedral::FlipV,
        Dihedral::Transpose,
        Dihedral::AntiTranspose,
    ];

    /// Source coordinate read for destination `(r, c)` in an `n x n` grid.
    fn source(self, r: usize, c: usize, n: usize) -> (usize, usize) {
        let m = n - 1;
        match self {
            Dihedral::Identity => (r, c),
            Dihedral::Rot90 => (c, m - r),
            Dihedral::Rot180 => (m - r, m - c),
            Dihedral::Rot270 => (m - c, r),
            Dihedral::FlipH => (r, m - c),
            Dihedral::FlipV => (m - r, c),
            Dihedral::Transpose => (c, r),
            Dihedral::AntiTranspose => (m - c, m - r),
        }
    }

    pub fn apply_plane<T: Copy>(self, data: &[T], n: usize) -> Vec<T> {
        let mut out = Vec::with_capacity(n * n);
        for r in 0..n {
            for c in 0..n {
                let (sr, sc) = self.source(r, c, n);
                out.push(data[sr * n + sc]);
            }
        }
        out
    }

    /// `self` applied after `first`.
    pub fn compose(self, first: Dihedral) -> Dihedral {
        let n = 3;
        let grid: Vec<usize> = (0..n * n).collect();
        let target = self.apply_plane(&first.apply_plane(&grid, n), n);
        Dihedral::ALL
            .into_iter()
            .find(|d| d.apply_plane(&grid, n) == target)
            .expect("the dihedral group is closed")
    }

    pub fn inverse(self) -> Dihedral {
        Dihedral::ALL
            .into_iter()
            .find(|d| d.compose(self) == Dihedral::Identity)
            .expect("every element has an inverse")
    }
}

/// Apply one spatial symmetry to both epochs and the label.
pub fn augment(p: &PatchPair, t: Dihedral) -> PatchPair {
    let n = p.patch;
    let bands = |data: &[f32]| -> Vec<f32> {
        data.chunks(n * n).flat_map(|plane| t.apply_plane(plane, n)).collect()
    };
    PatchPair {
        a: bands(&p.a),
        b: bands(&p.b),
        label: t.apply_plane(&p.label, n),
        ..p.clone()
    }
}

/// Inverse-frequency weights `w_c = N / (2 N_c)`.
pub fn class_weights_from_counts(n0: u64, n1: u64) -> Result<(f64, f64)> {
    if n0 == 0 || n1 == 0 {
        return Err(Error::DegenerateSplit(format!(
            "class counts ({n0}, {n1}) leave a class without pixels"
        )));
    }
    let n = (n0 + n1) as f64;
    Ok((n / (2.0 * n0 as f64), n / (2.0 * n1 as f64)))
}

pub fn class_weights_from_labels<'a>(labels: impl IntoIterator<Item = &'a u8>) -> Result<(f64, f64)> {
    let (mut n0, mut n1) = (0u64, 0u64);
    for &l in labels {
        if l == 0 {
            n0 += 1;
        } else {
            n1 += 1;
        }
    }
    class_weights_from_counts(n0, n1)
}

pub fn class_weights(m: &Manifest, split: Split) -> Result<(f64, f64)> {
    let mut labels = Vec::new();
    for e in m.entries_in(split) {
        labels.extend(read_binary_labels(&e.label)?);
    }
    if labels.is_empty() {
        return Err(Error::DegenerateSplit(format!("no {split:?} entries in the manifest")));
    }
    class_weights_from_labels(&labels)
}

/// Build a manifest from an OSCD-style tree:
/// `images/<city>/imgs_{1,2}_rect/<band>.tif`, `images/{train,test}.txt`
/// (comma-separated city names) and `{train,test}_labels/<city>/cm/<city>-cm.tif`.
pub fn scan_oscd(root: &Path) -> Result<Manifest> {
    let mut entries = Vec::new();
    for (split, list, labels) in [
        (Split::Train, "train.txt", "train_labels"),
        (Split::Test, "test.txt", "test_labels"),
    ] {
        let list_path = root.join("images").join(list);
        let text = match std::fs::read_to_string(&list_path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => continue,
            Err(e) => return Err(Error::io(&list_path, e)),
        };
        for city in text.split([',', '\n', '\r']).map(str::trim).filter(|c| !c.is_empty()) {
            let scene = |epoch: u8| -> Vec<PathBuf> {
                OSCD_BANDS
                    .iter()
                    .map(|b| root.join("images").join(city).join(format!("imgs_{epoch}_rect")).join(format!("{b}.tif")))
                    .collect()
            };
            entries.push(ManifestEntry {
                region: city.to_string(),
                t1: scene(1),
                t2: scene(2),
                label: root.join(labels).join(city).join("cm").join(format!("{city}-cm.tif")),
                split,
            });
        }
    }
    let m = Manifest { entries };
    validate_manifest(&m, DEFAULT_BANDS)?;
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::GeoTransform;
    use proptest::prelude::{prop_assert_eq, proptest};

    fn region(w: usize, h: usize, change: impl Fn(usize, usize) -> bool) -> RegionData {
        let plane = |k: f32| (0..w * h).map(|i| (i as f32 * 0.37 + k).sin()).collect::<Vec<f32>>();
        let mk = |k: f32| {
            let mut s = plane(k);
            s.extend(plane(k + 1.0));
            Raster::new(w, h, vec!["B1".into(), "B2".into()], s, GeoTransform::identity()).unwrap()
        };
        let label = (0..w * h).map(|i| change(i % w, i / w) as u8).collect();
        RegionData::new("r", mk(0.0), mk(0.5), label).unwrap()
    }

    fn spec(count: usize, frac: f64, seed: u64) -> SampleSpec {
        SampleSpec {
            patch: 32,
            count,
            balance_fraction: frac,
            seed,
        }
    }

    #[test]
    fn full_balance_always_contains_change() {
        let r = region(200, 150, |x, y| x == 170 && y == 20);
        let patches = sample_from_regions(&[r], &spec(50, 1.0, 3)).unwrap();
        assert_eq!(patches.len(), 50);
        assert!(patches.iter().all(PatchPair::has_change));
    }

    #[test]
    fn sampling_is_deterministic() {
        let r = region(100, 90, |x, _| x > 60);
        let a = sample_from_regions(std::slice::from_ref(&r), &spec(40, 0.0, 11)).unwrap();
        let b = sample_from_regions(std::slice::from_ref(&r), &spec(40, 0.0, 11)).unwrap();
        let offsets = |v: &[PatchPair]| v.iter().map(|p| p.offset).collect::<Vec<_>>();
        assert_eq!(offsets(&a), offsets(&b));
        let c = sample_from_regions(&[r], &spec(40, 0.0, 12)).unwrap();
        assert_ne!(offsets(&a), offsets(&c));
    }

    #[test]
    fn offsets_stay_in_bounds() {
        let r = region(600, 600, |x, y| (x + y) % 97 == 0);
        let patches = sample_from_regions(&[r], &spec(300, 0.5, 5)).unwrap();
        assert!(patches.iter().all(|p| p.offset.0 <= 568 && p.offset.1 <= 568));
    }

    #[test]
    fn labels_match_region_window() {
        let r = region(80, 70, |x, y| (x / 5 + y / 7) % 3 == 0);
        for p in sample_from_regions(std::slice::from_ref(&r), &spec(20, 0.5, 9)).unwrap() {
            let (c0, r0) = p.offset;
            for y in 0..32 {
                for x in 0..32 {
                    assert_eq!(p.label[y * 32 + x], r.label[(r0 + y) * 80 + c0 + x]);
                    assert_eq!(p.b[32 * 32 + y * 32 + x], r.b.get(1, r0 + y, c0 + x));
                }
            }
        }
    }

    #[test]
    fn balance_without_change_fails() {
        let r = region(64, 64, |_, _| false);
        let e = sample_from_regions(std::slice::from_ref(&r), &spec(4, 0.5, 1));
        assert!(matches!(e, Err(Error::Balance(_))));
        assert!(sample_from_regions(&[r], &spec(4, 0.0, 1)).is_ok());
    }

    #[test]
    fn invalid_sampling_arguments() {
        let r = region(64, 64, |_, _| true);
        let s = SampleSpec { patch: 7, ..spec(1, 0.0, 0) };
        assert!(matches!(sample_from_regions(std::slice::from_ref(&r), &s), Err(Error::Config(_))));
        assert!(matches!(sample_from_regions(&[r], &spec(1, 1.5, 0)), Err(Error::Config(_))));
    }

    #[test]
    fn class_weight_formula() {
        assert_eq!(class_weights_from_counts(50, 50).unwrap(), (1.0, 1.0));
        let (w0, w1) = class_weights_from_counts(90, 10).unwrap();
        assert!((w0 - 100.0 / 180.0).abs() < 1e-15);
        assert_eq!(w1, 5.0);
        assert!(matches!(class_weights_from_counts(100, 0), Err(Error::DegenerateSplit(_))));
    }

    #[test]
    fn dihedral_identities() {
        let p = PatchPair::extract(&region(8, 8, |x, y| x < y), 0, 0, 8);
        assert_eq!(augment(&p, Dihedral::Identity), p);
        let twice = augment(&augment(&p, Dihedral::FlipH), Dihedral::FlipH);
        assert_eq!(twice, p);
        let mut q = p.clone();
        for _ in 0..4 {
            q = augment(&q, Dihedral::Rot90);
        }
        assert_eq!(q, p);
        assert_eq!(Dihedral::Rot90.compose(Dihedral::Rot90), Dihedral::Rot180);
        assert_eq!(Dihedral::Rot90.inverse(), Dihedral::Rot270);
    }

    #[test]
    fn manifest_rejects_empty_and_short_entries() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        std::fs::write(&path, r#"{"entries":[]}"#).unwrap();
        assert!(matches!(load_manifest(&path), Err(Error::Manifest { .. })));

        let bands: Vec<String> = (0..12).map(|i| format!("\"b{i}.tif\"")).collect();
        let list = bands.join(",");
        std::fs::write(
            &path,
            format!(r#"{{"entries":[{{"region":"x","t1":[{list}],"t2":[{list}],"label":"l.tif","split":"train"}}]}}"#),
        )
        .unwrap();
        match load_manifest(&path) {
            Err(Error::Manifest { region, .. }) => assert_eq!(region, "x"),
            other => panic!("expected ManifestError, got {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn dihedral_group_laws(seed in 0u64..1000, n in 1usize..7) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let plane: Vec<f32> = (0..n * n).map(|_| rng.random()).collect();
            for a in Dihedral::ALL {
                prop_assert_eq!(a.inverse().apply_plane(&a.apply_plane(&plane, n), n), plane.clone());
                for b in Dihedral::ALL {
                    let seq = a.apply_plane(&b.apply_plane(&plane, n), n);
                    prop_assert_eq!(a.compose(b).apply_plane(&plane, n), seq);
                }
            }
        }
    }
}
