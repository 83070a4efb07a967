//! Urban/non-urban classification of superpixels with a random forest.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::metrics::Confusion;
use crate::raster::{parse_point_features, GeoTransform};
use crate::segment::{FeatureTable, SegmentMap};
use crate::{Error, Result};

pub const URBAN: u8 = 0;
pub const NONURBAN: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SamplePoint {
    pub x: f64,
    pub y: f64,
    pub label: u8,
}

fn parse_label(text: &str) -> Result<u8> {
    match text.trim().to_ascii_lowercase().as_str() {
        "0" | "urban" => Ok(URBAN),
        "1" | "nonurban" | "non-urban" => Ok(NONURBAN),
        other => Err(Error::Parse(format!("unknown sample label `{other}`"))),
    }
}

/// CSV with a header naming `x`, `y` and `label` columns.
pub fn parse_samples_csv(text: &str) -> Result<Vec<SamplePoint>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| Error::Parse(format!("sample CSV: {e}")))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Parse(format!("sample CSV has no `{name}` column")))
    };
    let (cx, cy, cl) = (col("x")?, col("y")?, col("label")?);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(format!("sample CSV row {}: {e}", i + 1)))?;
        let num = |c: usize| {
            rec.get(c)
                .and_then(|v| v.parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse(format!("sample CSV row {}: bad coordinate", i + 1)))
        };
        out.push(SamplePoint {
            x: num(cx)?,
            y: num(cy)?,
            label: parse_label(rec.get(cl).unwrap_or(""))?,
        });
    }
    Ok(out)
}

/// Point features carrying a `label` property (0/1 or urban/nonurban).
pub fn parse_samples_geojson(text: &str) -> Result<Vec<SamplePoint>> {
    parse_point_features(text)?
        .into_iter()
        .map(|((x, y), props)| {
            let label = match props.get("label") {
                Some(Value::Number(n)) => parse_label(&n.to_string())?,
                Some(Value::String(s)) => parse_label(s)?,
                _ => return Err(Error::Parse(format!("point ({x}, {y}) has no label property"))),
            };
            Ok(SamplePoint { x, y, label })
        })
        .collect()
}

pub fn read_samples(path: &Path) -> Result<Vec<SamplePoint>> {
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    let parse: fn(&str) -> Result<Vec<SamplePoint>> = match ext.as_deref() {
        Some("csv") => parse_samples_csv,
        Some("geojson") | Some("json") => parse_samples_geojson,
        _ => {
            return Err(Error::UnsupportedFormat(format!(
                "{}: sample points must be .csv or .geojson",
                path.display()
            )))
        }
    };
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse(&text)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledRow {
    pub segment: u32,
    pub features: Vec<f64>,
    pub label: u8,
}

/// Map points to segments and collapse points sharing a segment into one row
/// with the majority label (ties go to urban).
pub fn ingest_samples(
    points: &[SamplePoint],
    geo: &GeoTransform,
    map: &SegmentMap,
    features: &FeatureTable,
) -> Result<Vec<LabeledRow>> {
    if features.rows.len() != map.count {
        return Err(Error::Shape(format!(
            "{} feature rows for {} segments",
            features.rows.len(),
            map.count
        )));
    }
    let mut outside = Vec::new();
    let mut votes: BTreeMap<u32, [u32; 2]> = BTreeMap::new();
    for p in points {
        let (col, row) = geo.map_to_pixel(p.x, p.y);
        let (col, row) = (col.floor(), row.floor());
        if !(col >= 0.0 && row >= 0.0 && col < map.width as f64 && row < map.height as f64) {
            outside.push(format!("({}, {})", p.x, p.y));
            continue;
        }
        let seg = map.label_at(col as usize, row as usize);
        votes.entry(seg).or_default()[p.label as usize] += 1;
    }
    if !outside.is_empty() {
        return Err(Error::Sample(format!(
            "{} point(s) outside the raster extent: {}",
            outside.len(),
            outside.join(", ")
        )));
    }
    Ok(votes
        .into_iter()
        .map(|(segment, v)| LabeledRow {
            segment,
            features: features.rows[segment as usize].clone(),
            label: if v[1] > v[0] { NONURBAN } else { URBAN },
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// `ceil(sqrt(F))` when unset.
    pub features_per_split: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            max_depth: 12,
            min_leaf: 2,
            features_per_split: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 || self.max_depth == 0 || self.min_leaf == 0 || self.features_per_split == Some(0) {
            return Err(Error::Config(format!(
                "forest needs n_trees, max_depth, min_leaf and features_per_split >= 1: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        class: u8,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, row: &[f64]) -> u8 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { class } => return class,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[feature as usize] <= threshold { left } else { right } as usize,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    pub n_features: usize,
    pub trees: Vec<Tree>,
}

fn majority(counts: [usize; 2]) -> u8 {
    if counts[1] > counts[0] {
        1
    } else {
        0
    }
}

fn gini(c: [usize; 2]) -> f64 {
    let n = (c[0] + c[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let (p0, p1) = (c[0] as f64 / n, c[1] as f64 / n);
    1.0 - p0 * p0 - p1 * p1
}

struct Grower<'a> {
    rows: &'a [Vec<f64>],
    labels: &'a [u8],
    cfg: &'a ForestConfig,
    mtry: usize,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
}

impl Grower<'_> {
    fn counts(&self, idx: &[usize]) -> [usize; 2] {
        let mut c = [0; 2];
        for &i in idx {
            c[self.labels[i] as usize] += 1;
        }
        c
    }

    /// Best `(feature, threshold, weighted child impurity)` over a random
    /// feature subset.
    fn best_split(&mut self, idx: &[usize]) -> Option<(usize, f64, f64)> {
        let f = self.rows[0].len();
        let candidates = rand::seq::index::sample(&mut self.rng, f, self.mtry.min(f));
        let total = self.counts(idx);
        let n = idx.len() as f64;
        let mut best: Option<(usize, f64, f64)> = None;
        let mut sorted = idx.to_vec();
        for feat in candidates.iter() {
            sorted.sort_by(|&a, &b| self.rows[a][feat].total_cmp(&self.rows[b][feat]).then(a.cmp(&b)));
            let mut left = [0usize; 2];
            for k in 0..sorted.len() - 1 {
                left[self.labels[sorted[k]] as usize] += 1;
                let (v, next) = (self.rows[sorted[k]][feat], self.rows[sorted[k + 1]][feat]);
                let nl = k + 1;
                if v == next || nl < self.cfg.min_leaf || sorted.len() - nl < self.cfg.min_leaf {
                    continue;
                }
                let right = [total[0] - left[0], total[1] - left[1]];
                let score = (nl as f64 * gini(left) + (n - nl as f64) * gini(right)) / n;
                if best.is_none_or(|b| score < b.2) {
                    best = Some((feat, v + (next - v) / 2.0, score));
                }
            }
        }
        best
    }

    fn grow(&mut self, idx: &[usize], depth: usize) -> u32 {
        let counts = self.counts(idx);
        let at = self.nodes.len();
        self.nodes.push(Node::Leaf { class: majority(counts) });
        let pure = counts[0] == 0 || counts[1] == 0;
        if pure || depth >= self.cfg.max_depth || idx.len() < 2 * self.cfg.min_leaf {
            return at as u32;
        }
        let Some((feature, threshold, score)) = self.best_split(idx) else {
            return at as u32;
        };
        if score >= gini(counts) {
            return at as u32;
        }
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.rows[i][feature] <= threshold);
        let left = self.grow(&l, depth + 1);
        let right = self.grow(&r, depth + 1);
        self.nodes[at] = Node::Split {
            feature: feature as u32,
            threshold,
            left,
            right,
        };
        at as u32
    }
}

fn check_rows(rows: &[Vec<f64>], labels: &[u8]) -> Result<usize> {
    if rows.is_empty() || rows.len() != labels.len() {
        return Err(Error::Shape(format!("{} rows and {} labels", rows.len(), labels.len())));
    }
    let f = rows[0].len();
    if f == 0 || rows.iter().any(|r| r.len() != f) {
        return Err(Error::Shape("feature rows must share a nonzero length".into()));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NumericFault("non-finite feature value".into()));
    }
    if let Some(bad) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::Label(format!("class label {bad} is not 0 or 1")));
    }
    Ok(f)
}

impl Forest {
    /// Grow `n_trees` trees on bootstrap samples (or all rows), each with its
    /// own random stream derived from the seed.
    pub fn fit(rows: &[Vec<f64>], labels: &[u8], cfg: &ForestConfig) -> Result<Forest> {
        cfg.validate()?;
        let f = check_rows(rows, labels)?;
        if !labels.contains(&0) || !labels.contains(&1) {
            return Err(Error::DegenerateSplit("training rows contain a single class".into()));
        }
        let mtry = cfg.features_per_split.unwrap_or_else(|| (f as f64).sqrt().ceil() as usize);
        let trees = (0..cfg.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(t as u64);
                let idx: Vec<usize> = if cfg.bootstrap {
                    use rand::Rng;
                    (0..rows.len()).map(|_| rng.random_range(0..rows.len())).collect()
                } else {
                    (0..rows.len()).collect()
                };
                let mut g = Grower {
                    rows,
                    labels,
                    cfg,
                    mtry,
                    rng,
                    nodes: Vec::new(),
                };
                g.grow(&idx, 0);
                Tree { nodes: g.nodes }
            })
            .collect();
        Ok(Forest { n_features: f, trees })
    }

    pub fn votes(&self, row: &[f64]) -> Result<[usize; 2]> {
        if row.len() != self.n_features {
            return Err(Error::Shape(format!(
                "feature vector of length {}, forest expects {}",
                row.len(),
                self.n_features
            )));
        }
        let mut v = [0; 2];
        for t in &self.trees {
            v[t.predict(row) as usize] += 1;
        }
        Ok(v)
    }

    /// Majority vote; ties go to class 0.
    pub fn predict(&self, row: &[f64]) -> Result<u8> {
        self.votes(row).map(majority)
    }
}

#[derive(Debug, Clone)]
pub struct ForestReport {
    pub forest: Forest,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    /// Held-out confusion with urban (class 0) as the positive class.
    pub confusion: Confusion,
}

/// Stratified shuffled split, fit on the training share, score the rest.
pub fn train_forest(rows: &[LabeledRow], split_fraction: f64, cfg: &ForestConfig) -> Result<ForestReport> {
    if !(split_fraction > 0.0 && split_fraction <= 1.0) {
        return Err(Error::Config(format!("split fraction {split_fraction} outside (0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut train_idx, mut test_idx) = (Vec::new(), Vec::new());
    for class in [URBAN, NONURBAN] {
        let mut idx: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].label == class).collect();
        if idx.is_empty() {
            return Err(Error::DegenerateSplit(format!("no samples of class {class}")));
        }
        idx.shuffle(&mut rng);
        let n_train = ((split_fraction * idx.len() as f64).round() as usize).clamp(1, idx.len());
        test_idx.extend_from_slice(&idx[n_train..]);
        idx.truncate(n_train);
        train_idx.extend(idx);
    }
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    let x: Vec<Vec<f64>> = train_idx.iter().map(|&i| rows[i].features.clone()).collect();
    let y: Vec<u8> = train_idx.iter().map(|&i| rows[i].label).collect();
    let forest = Forest::fit(&x, &y, cfg)?;
    let mut confusion = Confusion::default();
    for &i in &test_idx {
        let pred = forest.predict(&rows[i].features)?;
        confusion.record(pred == URBAN, rows[i].label == URBAN);
    }
    Ok(ForestReport {
        forest,
        train_indices: train_idx,
        test_indices: test_idx,
        confusion,
    })
}

/// Label every segment and paint the labels onto the pixel grid.
pub fn classify_segments(forest: &Forest, features: &FeatureTable, map: &SegmentMap) -> Result<(Vec<u8>, Vec<u8>)> {
    if features.rows.len() != map.count {
        return Err(Error::Shape(format!(
            "{} feature rows for {} segments",
            features.rows.len(),
            map.count
        )));
    }
    let seg_labels: Vec<u8> = features.rows.iter().map(|r| forest.predict(r)).collect::<Result<_>>()?;
    let pixels = map.labels.iter().map(|&l| seg_labels[l as usize]).collect();
    Ok((seg_labels, pixels))
}

const MAGIC: &[u8; 4] = b"RFOR";
const VERSION: u32 = 1;

impl Forest {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.n_features as u32).to_le_bytes());
        out.extend_from_slice(&(self.trees.len() as u32).to_le_bytes());
        for t in &self.trees {
            out.extend_from_slice(&(t.nodes.len() as u32).to_le_bytes());
            for n in &t.nodes {
                let (feature, threshold, left, right, class) = match *n {
                    Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => (feature as i32, threshold, left, right, 0u8),
                    Node::Leaf { class } => (-1, 0.0, 0, 0, class),
                };
                out.extend_from_slice(&feature.to_le_bytes());
                out.extend_from_slice(&threshold.to_le_bytes());
                out.extend_from_slice(&left.to_le_bytes());
                out.extend_from_slice(&right.to_le_bytes());
                out.push(class);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Forest> {
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8]> {
            let s = bytes
                .get(pos..pos + n)
                .ok_or_else(|| Error::Parse(format!("forest file truncated at byte {pos}")))?;
            pos += n;
            Ok(s)
        };
        if take(4)? != MAGIC {
            return Err(Error::Parse("not a forest file (bad magic)".into()));
        }
        let rd = |s: &[u8]| u32::from_le_bytes(s.try_into().expect("4 bytes"));
        let version = rd(take(4)?);
        if version != VERSION {
            return Err(Error::Parse(format!("unsupported forest version {version}")));
        }
        let n_features = rd(take(4)?) as usize;
        let n_trees = rd(take(4)?) as usize;
        let mut trees = Vec::with_capacity(n_trees.min(1 << 16));
        for _ in 0..n_trees {
            let n_nodes = rd(take(4)?) as usize;
            let mut nodes = Vec::with_capacity(n_nodes.min(1 << 20));
            for _ in 0..n_nodes {
                let feature = i32::from_le_bytes(take(4)?.try_into().expect("4 bytes"));
                let threshold = f64::from_le_bytes(take(8)?.try_into().expect("8 bytes"));
                let left = rd(take(4)?);
                let right = rd(take(4)?);
                let class = take(1)?[0];
                nodes.push(if feature < 0 {
                    Node::Leaf { class }
                } else {
                    Node::Split {
                        feature: feature as u32,
                        threshold,
                        left,
                        right,
                    }
                });
            }
            let valid = nodes.iter().all(|n| match *n {
                Node::Split { feature, left, right, .. } => {
                    (feature as usize) < n_features && (left as usize) < n_nodes && (right as usize) < n_nodes
                }
                Node::Leaf { class } => class <= 1,
            });
            if nodes.is_empty() || !valid {
                return Err(Error::Parse("forest file has an invalid tree".into()));
            }
            trees.push(Tree { nodes });
        }
        if pos != bytes.len() {
            return Err(Error::Parse("trailing bytes in forest file".into()));
        }
        Ok(Forest { n_features, trees })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Forest> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Forest::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert_eq, proptest};
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn blobs(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<u8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let c = (i % 2) as u8;
            let mu = if c == 0 { -2.0 } else { 2.0 };
            x.push((0..4).map(|_| mu + noise.sample(&mut rng)).collect());
            y.push(c);
        }
        (x, y)
    }

    fn blob_rows(n: usize, seed: u64) -> Vec<LabeledRow> {
        let (x, y) = blobs(n, seed);
        x.into_iter()
            .zip(y)
            .enumerate()
            .map(|(i, (features, label))| LabeledRow { segment: i as u32, features, label })
            .collect()
    }

    #[test]
    fn separates_two_gaussians() {
        let mut acc = 0.0;
        for seed in 0..5 {
            let rep = train_forest(&blob_rows(200, seed), 0.7, &ForestConfig { seed, ..Default::default() }).unwrap();
            let c = rep.confusion;
            acc += (c.tp + c.tn) as f64 / c.total() as f64;
        }
        assert!(acc / 5.0 > 0.95, "mean accuracy {}", acc / 5.0);
    }

    #[test]
    fn stump_reproduces_threshold_rule() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let y: Vec<u8> = (0..20).map(|i| (i >= 7) as u8).collect();
        let cfg = ForestConfig {
            n_trees: 1,
            max_depth: 1,
            min_leaf: 1,
            bootstrap: false,
            ..Default::default()
        };
        let f = Forest::fit(&x, &y, &cfg).unwrap();
        match f.trees[0].nodes[0] {
            Node::Split { feature, threshold, .. } => {
                assert_eq!(feature, 0);
                assert_eq!(threshold, 6.5);
            }
            n => panic!("expected a split, got {n:?}"),
        }
        for (r, &l) in x.iter().zip(&y) {
            assert_eq!(f.predict(r).unwrap(), l);
        }
    }

    #[test]
    fn same_seed_same_forest() {
        let (x, y) = blobs(100, 3);
        let cfg = ForestConfig { n_trees: 10, seed: 9, ..Default::default() };
        let a = Forest::fit(&x, &y, &cfg).unwrap();
        let b = Forest::fit(&x, &y, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_bytes(), b.to_bytes());
    }

    #[test]
    fn single_class_is_degenerate() {
        let x = vec![vec![1.0], vec![2.0]];
        assert!(matches!(
            Forest::fit(&x, &[1, 1], &ForestConfig::default()),
            Err(Error::DegenerateSplit(_))
        ));
    }

    #[test]
    fn vote_tie_goes_to_urban() {
        let leaf = |class| Tree { nodes: vec![Node::Leaf { class }] };
        let f = Forest { n_features: 1, trees: vec![leaf(1), leaf(0)] };
        assert_eq!(f.predict(&[0.0]).unwrap(), URBAN);
        assert!(matches!(f.predict(&[0.0, 1.0]), Err(Error::Shape(_))));
    }

    proptest! {
        #[test]
        fn duplicated_tree_keeps_clear_majority(ones in 0usize..20, zeros in 0usize..20, pick in 0usize..40) {
            proptest::prop_assume!(ones.abs_diff(zeros) >= 2 && ones + zeros > 0);
            let leaf = |class| Tree { nodes: vec![Node::Leaf { class }] };
            let mut trees: Vec<Tree> = (0..ones).map(|_| leaf(1)).chain((0..zeros).map(|_| leaf(0))).collect();
            let before = Forest { n_features: 1, trees: trees.clone() }.predict(&[0.0]).unwrap();
            trees.push(trees[pick % trees.len()].clone());
            prop_assert_eq!(Forest { n_features: 1, trees }.predict(&[0.0]).unwrap(), before);
        }

        #[test]
        fn vote_ignores_tree_order(classes in proptest::collection::vec(0u8..2, 1..30), seed in 0u64..1000) {
            let trees: Vec<Tree> = classes.iter().map(|&c| Tree { nodes: vec![Node::Leaf { class: c }] }).collect();
            let mut shuffled = trees.clone();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let a = Forest { n_features: 1, trees };
            let b = Forest { n_features: 1, trees: shuffled };
            prop_assert_eq!(a.predict(&[0.0]).unwrap(), b.predict(&[0.0]).unwrap());
        }

        #[test]
        fn persistence_round_trips(seed in 0u64..50) {
            let (x, y) = blobs(40, seed);
            let f = Forest::fit(&x, &y, &ForestConfig { n_trees: 3, seed, ..Default::default() }).unwrap();
            prop_assert_eq!(Forest::from_bytes(&f.to_bytes()).unwrap(), f);
        }
    }

    #[test]
    fn corrupt_forest_bytes_are_rejected() {
        let (x, y) = blobs(40, 1);
        let bytes = Forest::fit(&x, &y, &ForestConfig { n_trees: 2, ..Default::default() }).unwrap().to_bytes();
        assert!(Forest::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Forest::from_bytes(&bad).is_err());
        let mut long = bytes;
        long.push(0);
        assert!(Forest::from_bytes(&long).is_err());
    }

    #[test]
    fn stratified_split_keeps_class_shares() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rows: Vec<LabeledRow> = (0..100)
            .map(|i| {
                let label = (i < 30) as u8;
                LabeledRow {
                    segment: i,
                    features: vec![label as f64 + rng.random::<f64>() * 0.1],
                    label,
                }
            })
            .collect();
        let rep = train_forest(&rows, 0.7, &ForestConfig { n_trees: 5, ..Default::default() }).unwrap();
        let train_ones = rep.train_indices.iter().filter(|&&i| rows[i].label == 1).count();
        assert_eq!(train_ones, 21);
        assert_eq!(rep.train_indices.len(), 70);
        assert_eq!(rep.test_indices.len(), 30);
        let c = rep.confusion;
        assert_eq!(c.tp + c.tn, 30);
    }

    #[test]
    fn csv_labels_accept_words_and_digits() {
        let pts = parse_samples_csv("x,y,label\n1,2,urban\n3,4,1\n5,6,NonUrban\n").unwrap();
        assert_eq!(pts.iter().map(|p| p.label).collect::<Vec<_>>(), vec![0, 1, 1]);
        assert!(parse_samples_csv("x,y,label\n1,2,forest\n").is_err());
        assert!(parse_samples_csv("x,y\n1,2\n").is_err());
    }
}
