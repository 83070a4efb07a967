use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::Args;
use serde_json::{json, Value};
use urbdiff_core::acquire::{build_query, search, AcquisitionQuery, FixtureFetch};
use urbdiff_core::coreg::coregister;
use urbdiff_core::dataset::{class_weights, load_manifest_with, load_split, sample_from_regions, scan_oscd, SampleSpec, Split};
use urbdiff_core::landcover::{classify_segments, ingest_samples, read_samples, train_forest, NONURBAN, URBAN};
use urbdiff_core::metrics::{changed_area, confusion, scores};
use urbdiff_core::raster::{
    crop_to_aoi, merge_bands, normalize_pair, read_aoi_geojson, read_label_raster, read_raster, write_internal,
    write_label_raster,
};
use urbdiff_core::segment::{slic, superpixel_features};
use urbdiff_core::siamese::{config_from_checkpoint, predict_scene};
use urbdiff_core::{DiffMode, Error, Network, Raster, SegmentMap};

use crate::config::{write_record, RunConfig};
use crate::{Failure, Overrides};

fn required(flag: &Option<PathBuf>, fallback: &Option<PathBuf>, name: &str) -> Result<PathBuf, Failure> {
    flag.clone()
        .or_else(|| fallback.clone())
        .ok_or_else(|| Failure::Usage(format!("missing --{name} (or paths.{name} in the config)")))
}

fn suffixed(out: &Path, suffix: &str) -> PathBuf {
    PathBuf::from(format!("{}{suffix}", out.display()))
}

fn write_raster(path: &Path, r: &Raster) -> Result<String, Failure> {
    write_internal(path, r)?;
    Ok(path.display().to_string())
}

/// One raster from one multi-band file or several single-band files.
fn read_stack(paths: &[PathBuf]) -> Result<Raster, Failure> {
    match paths {
        [] => Err(Failure::Usage("no raster paths given".into())),
        [one] => Ok(read_raster(one)?),
        many => {
            let parts = many.iter().map(|p| read_raster(p)).collect::<urbdiff_core::Result<Vec<_>>>()?;
            Ok(merge_bands(&parts)?)
        }
    }
}

fn binary_band(r: &Raster, what: &str) -> Result<Vec<u8>, Failure> {
    r.band(0)
        .iter()
        .enumerate()
        .map(|(i, &v)| match v {
            0.0 => Ok(0),
            1.0 => Ok(1),
            _ => Err(Error::Label(format!("{what}: pixel {i} holds {v}, expected 0 or 1")).into()),
        })
        .collect()
}

#[derive(Debug, Args)]
pub struct AcquireArgs {
    /// AOI polygon as geoJSON.
    #[arg(long)]
    aoi: Option<PathBuf>,
    #[arg(long)]
    start: NaiveDate,
    #[arg(long)]
    end: NaiveDate,
    #[arg(long, default_value = "Sentinel-2")]
    platform: String,
    #[arg(long, default_value = "S2MSI1C")]
    product_type: String,
    #[arg(long, default_value_t = 0.0)]
    cloud_min: f64,
    #[arg(long, default_value_t = 100.0)]
    cloud_max: f64,
    /// Recorded catalog response (JSON) to parse.
    #[arg(long)]
    response: Option<PathBuf>,
    /// Also write the product list here.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Overrides for AcquireArgs {}

pub fn acquire(a: &AcquireArgs, cfg: &RunConfig, name: &str) -> Result<Value, Failure> {
    let aoi = read_aoi_geojson(&required(&a.aoi, &cfg.paths.aoi, "aoi")?)?;
    let response = required(&a.response, &cfg.paths.response, "response")?;
    let q = AcquisitionQuery::new(aoi, a.start, a.end, &a.platform, &a.product_type, a.cloud_min, a.cloud_max)
        .map_err(|e| Failure::Usage(e.to_string()))?;
    let products = search(&q, &FixtureFetch { path: response })?;
    let summary = json!({ "query": build_query(&q), "products": products });
    if let Some(out) = a.out.as_ref().or(cfg.paths.out.as_ref()) {
        std::fs::write(out, serde_json::to_string_pretty(&summary).expect("serializes"))
            .map_err(|e| Failure::Run(format!("{}: {e}", out.display())))?;
        write_record(out, name, cfg)?;
    }
    Ok(summary)
}

#[derive(Debug, Args)]
pub struct CoregArgs {
    /// Reference scene (one multi-band file or several band files).
    #[arg(long, num_args = 1.., required = true)]
    reference: Vec<PathBuf>,
    /// Scene to warp onto the reference grid.
    #[arg(long, num_args = 1.., required = true)]
    moving: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long)]
    window_radius: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    rank_radius: Option<usize>,
}

impl Overrides for CoregArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        let c = &mut cfg.coreg;
        c.pyramid_levels = self.levels.unwrap_or(c.pyramid_levels);
        c.window_radius = self.window_radius.unwrap_or(c.window_radius);
        c.iterations_per_level = self.iterations.unwrap_or(c.iterations_per_level);
        c.rank_radius = self.rank_radius.unwrap_or(c.rank_radius);
    }
}

pub fn coreg(a: &CoregArgs, cfg: &RunConfig, name: &str) -> Result<Value, Failure> {
    let out = required(&a.out, &cfg.paths.out, "out")?;
    let reference = read_stack(&a.reference)?;
    let moving = read_stack(&a.moving)?;
    let reg = coregister(&reference, &moving, &cfg.coreg)?;
    let f = &reg.flow;
    let flow = Raster::new(
        f.width,
        f.height,
        vec!["u".into(), "v".into()],
        f.u.iter().chain(&f.v).copied().collect(),
        *reference.geo(),
    )?;
    let valid = Raster::new(
        f.width,
        f.height,
        vec!["valid".into()],
        reg.valid.iter().map(|&v| v as u8 as f32).collect(),
        *reference.geo(),
    )?;
    let n = (f.width * f.height) as f64;
    let outputs = [
        write_raster(&suffixed(&out, "_warped"), &reg.warped)?,
        write_raster(&suffixed(&out, "_flow"), &flow)?,
        write_raster(&suffixed(&out, "_valid"), &valid)?,
    ];
    let record = write_record(&out, name, cfg)?;
    Ok(json!({
        "mean_u": f.u.iter().map(|&x| x as f64).sum::<f64>() / n,
        "mean_v": f.v.iter().map(|&x| x as f64).sum::<f64>() / n,
        "max_abs": f.max_abs(),
        "valid_fraction": reg.valid.iter().filter(|&&v| v).count() as f64 / n,
        "outputs": outputs,
        "record": record,
    }))
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[arg(long, num_args = 1.., required = true)]
    input: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Requested number of superpixels; clamped to the pixel count.
    #[arg(long)]
    segments: Option<usize>,
    #[arg(long)]
    compactness: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Keep disconnected fragments as they are.
    #[arg(long)]
    no_connectivity: bool,
    #[arg(long)]
    red: Option<String>,
    #[arg(long)]
    nir: Option<String>,
}

impl Overrides for SegmentArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        let s = &mut cfg.slic;
        s.n_segments = self.segments.unwrap_or(s.n_segments);
        s.compactness = self.compactness.unwrap_or(s.compactness);
        s.max_iters = self.max_iters.unwrap_or(s.max_iters);
        if self.no_connectivity {
            s.enforce_connectivity = false;
        }
        if let Some(r) = &self.red {
            cfg.bands.red = r.clone();
        }
        if let Some(n) = &self.nir {
            cfg.bands.nir = n.clone();
        }
    }
}

pub fn segment(a: &SegmentArgs, cfg: &mut RunConfig, name: &str) -> Result<Value, Failure> {
    let out = required(&a.out, &cfg.paths.out, "out")?;
    let r = read_stack(&a.input)?;
    let requested = cfg.slic.n_segments;
    if requested > r.pixel_count() {
        log::warn!(
            "{requested} segments requested for {} pixels; using {}",
            r.pixel_count(),
            r.pixel_count()
        );
        cfg.slic.n_segments = r.pixel_count();
    }
    let map = slic(&r, &cfg.slic)?;
    let table = superpixel_features(&r, &map, &cfg.bands)?;
    let seg_path = suffixed(&out, "_segments");
    write_label_raster(&seg_path, &map.to_label_raster(*r.geo()))?;
    let csv_path = suffixed(&out, "_features.csv");
    let file = File::create(&csv_path).map_err(|e| Failure::Run(format!("{}: {e}", csv_path.display())))?;
    table.write_csv(BufWriter::new(file))?;
    let record = write_record(&out, name, cfg)?;
    Ok(json!({
        "requested_segments": requested,
        "used_segments": cfg.slic.n_segments,
        "segments": map.count,
        "features": table.names,
        "outputs": [seg_path, csv_path],
        "record": record,
    }))
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[arg(long, num_args = 1.., required = true)]
    input: Vec<PathBuf>,
    /// Segment label raster written by `segment`.
    #[arg(long)]
    segments: PathBuf,
    /// Labeled points (.csv with x,y,label or .geojson).
    #[arg(long)]
    samples: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Share of sample rows used for training.
    #[arg(long, default_value_t = 0.7)]
    split: f64,
    #[arg(long)]
    trees: Option<usize>,
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long)]
    min_leaf: Option<usize>,
    #[arg(long)]
    features_per_split: Option<usize>,
    #[arg(long)]
    red: Option<String>,
    #[arg(long)]
    nir: Option<String>,
}

impl Overrides for ClassifyArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        let f = &mut cfg.forest;
        f.n_trees = self.trees.unwrap_or(f.n_trees);
        f.max_depth = self.max_depth.unwrap_or(f.max_depth);
        f.min_leaf = self.min_leaf.unwrap_or(f.min_leaf);
        if self.features_per_split.is_some() {
            f.features_per_split = self.features_per_split;
        }
        if let Some(r) = &self.red {
            cfg.bands.red = r.clone();
        }
        if let Some(n) = &self.nir {
            cfg.bands.nir = n.clone();
        }
    }
}

pub fn classify(a: &ClassifyArgs, cfg: &RunConfig, name: &str) -> Result<Value, Failure> {
    let out = required(&a.out, &cfg.paths.out, "out")?;
    let samples = required(&a.samples, &cfg.paths.samples, "samples")?;
    let r = read_stack(&a.input)?;
    let map = SegmentMap::from_label_raster(&read_label_raster(&a.segments)?)?;
    if (map.width, map.height) != (r.width(), r.height()) {
        return Err(Error::Alignment(format!(
            "segments are {}x{}, raster is {}x{}",
            map.width,
            map.height,
            r.width(),
            r.height()
        ))
        .into());
    }
    let table = superpixel_features(&r, &map, &cfg.bands)?;
    let rows = ingest_samples(&read_samples(&samples)?, r.geo(), &map, &table)?;
    let report = train_forest(&rows, a.split, &cfg.forest)?;
    let (_, pixels) = classify_segments(&report.forest, &table, &map)?;
    let landcover = Raster::new(
        r.width(),
        r.height(),
        vec!["landcover".into()],
        pixels.iter().map(|&l| l as f32).collect(),
        *r.geo(),
    )?;
    let forest_path = suffixed(&out, "_forest.rfor");
    report.forest.save(&forest_path)?;
    let outputs = [write_raster(&out, &landcover)?, forest_path.display().to_string()];
    let record = write_record(&out, name, cfg)?;
    let held_out = if report.confusion.total() > 0 {
        serde_json::to_value(scores(&report.confusion)?).expect("serializes")
    } else {
        Value::Null
    };
    Ok(json!({
        "rows": rows.len(),
        "train_rows": report.train_indices.len(),
        "test_rows": report.test_indices.len(),
        "held_out": held_out,
        "urban_pixels": pixels.iter().filter(|&&p| p == URBAN).count(),
        "nonurban_pixels": pixels.iter().filter(|&&p| p == NONURBAN).count(),
        "outputs": outputs,
        "record": record,
    }))
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Checkpoint to write.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    /// Random dihedral augmentation of training patches.
    #[arg(long)]
    augment: bool,
    #[arg(long)]
    patch: Option<usize>,
    /// Encoder widths, e.g. 16,32,64,128.
    #[arg(long, value_delimiter = ',')]
    channels: Option<Vec<usize>>,
    #[arg(long, value_parser = parse_diff_mode)]
    diff_mode: Option<DiffMode>,
    /// Number of training patches to draw.
    #[arg(long)]
    patches: Option<usize>,
    #[arg(long)]
    balance: Option<f64>,
}

fn parse_diff_mode(s: &str) -> Result<DiffMode, String> {
    serde_json::from_value(Value::String(s.into())).map_err(|_| format!("`{s}` is not absolute or euclidean"))
}

impl Overrides for TrainArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        let t = &mut cfg.train;
        t.epochs = self.epochs.unwrap_or(t.epochs);
        t.batch_size = self.batch_size.unwrap_or(t.batch_size);
        t.lr = self.lr.unwrap_or(t.lr);
        t.momentum = self.momentum.unwrap_or(t.momentum);
        t.weight_decay = self.weight_decay.unwrap_or(t.weight_decay);
        t.augment |= self.augment;
        let s = &mut cfg.siamese;
        s.patch_size = self.patch.unwrap_or(s.patch_size);
        if let Some(c) = &self.channels {
            s.encoder_channels = c.clone();
        }
        s.diff_mode = self.diff_mode.unwrap_or(s.diff_mode);
        cfg.dataset.patches = self.patches.unwrap_or(cfg.dataset.patches);
        cfg.dataset.balance_fraction = self.balance.unwrap_or(cfg.dataset.balance_fraction);
    }
}

pub fn train(a: &TrainArgs, cfg: &RunConfig, name: &str) -> Result<Value, Failure> {
    let out = required(&a.out, &cfg.paths.out, "out")?;
    let manifest = load_manifest_with(&required(&a.manifest, &cfg.paths.manifest, "manifest")?, cfg.siamese.in_bands)?;
    let regions = load_split(&manifest, Split::Train)?;
    let spec = SampleSpec {
        patch: cfg.siamese.patch_size,
        count: cfg.dataset.patches,
        balance_fraction: cfg.dataset.balance_fraction,
        seed: cfg.train.seed,
    };
    let patches = sample_from_regions(&regions, &spec)?;
    let mut tc = cfg.train.clone();
    if tc.class_weights.is_none() {
        match class_weights(&manifest, Split::Train) {
            Ok(w) => tc.class_weights = Some(w),
            Err(e) => log::warn!("split-level class weights unavailable ({e}); using patch counts"),
        }
    }
    let mut net = Network::<f32>::new(cfg.siamese.clone(), cfg.train.seed)?;
    let report = urbdiff_core::siamese::train(&mut net, &patches, &tc)?;
    net.save(&out)?;
    let record = write_record(&out, name, cfg)?;
    Ok(json!({
        "checkpoint": out,
        "patches": patches.len(),
        "class_weights": report.class_weights,
        "trace": report.trace,
        "record": record,
    }))
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Earlier scene.
    #[arg(long, num_args = 1.., required = true)]
    a: Vec<PathBuf>,
    /// Later scene.
    #[arg(long, num_args = 1.., required = true)]
    b: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Tile size the checkpoint was trained with.
    #[arg(long)]
    patch: Option<usize>,
}

impl Overrides for InferArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        cfg.siamese.patch_size = self.patch.unwrap_or(cfg.siamese.patch_size);
    }
}

pub fn infer(a: &InferArgs, cfg: &RunConfig, name: &str) -> Result<Value, Failure> {
    let out = required(&a.out, &cfg.paths.out, "out")?;
    let ckpt = required(&a.checkpoint, &cfg.paths.checkpoint, "checkpoint")?;
    let bytes = std::fs::read(&ckpt).map_err(|e| Failure::Run(format!("{}: {e}", ckpt.display())))?;
    let net_cfg = config_from_checkpoint(&bytes, cfg.siamese.patch_size)?;
    let net = Network::<f32>::from_bytes(&bytes, &net_cfg)?;
    let (ta, tb) = normalize_pair(&read_stack(&a.a)?, &read_stack(&a.b)?)?;
    let map = predict_scene(&net, &ta, &tb)?;
    let outputs = [
        write_raster(&out, &map.label_raster()?)?,
        write_raster(&suffixed(&out, "_prob"), &map.probability_raster()?)?,
    ];
    let area = changed_area(&map.labels, &map.geo)?;
    let record = write_record(&out, name, cfg)?;
    Ok(json!({
        "width": map.width,
        "height": map.height,
        "area": area,
        "outputs": outputs,
        "record": record,
    }))
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Predicted change map (band 0, values 0/1).
    #[arg(long)]
    pred: PathBuf,
    /// Reference change map (band 0, values 0/1).
    #[arg(long)]
    truth: PathBuf,
    /// Also write the report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Overrides for EvalArgs {}

pub fn eval(a: &EvalArgs, cfg: &RunConfig, name: &str) -> Result<Value, Failure> {
    let pred = read_raster(&a.pred)?;
    let truth = read_raster(&a.truth)?;
    if (pred.width(), pred.height()) != (truth.width(), truth.height()) {
        return Err(Error::Alignment(format!(
            "prediction is {}x{}, reference is {}x{}",
            pred.width(),
            pred.height(),
            truth.width(),
            truth.height()
        ))
        .into());
    }
    let c = confusion(&binary_band(&pred, "prediction")?, &binary_band(&truth, "reference")?)?;
    let report = serde_json::to_value(scores(&c)?).expect("serializes");
    if let Some(out) = &a.out {
        std::fs::write(out, serde_json::to_string_pretty(&report).expect("serializes"))
            .map_err(|e| Failure::Run(format!("{}: {e}", out.display())))?;
        write_record(out, name, cfg)?;
    }
    Ok(report)
}

#[derive(Debug, Args)]
pub struct AreaArgs {
    /// Binary change map.
    #[arg(long)]
    map: PathBuf,
    /// Restrict to the bounding box of this AOI polygon.
    #[arg(long)]
    aoi: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Overrides for AreaArgs {}

pub fn area(a: &AreaArgs, cfg: &RunConfig, name: &str) -> Result<Value, Failure> {
    let mut map = read_raster(&a.map)?;
    if let Some(aoi) = a.aoi.as_ref().or(cfg.paths.aoi.as_ref()) {
        map = crop_to_aoi(&map, &read_aoi_geojson(aoi)?)?;
    }
    let stats = changed_area(&binary_band(&map, "change map")?, map.geo())?;
    let mut v = serde_json::to_value(stats).expect("serializes");
    v["area_km2"] = json!(stats.area_m2 / 1e6);
    if let Some(out) = &a.out {
        std::fs::write(out, serde_json::to_string_pretty(&v).expect("serializes"))
            .map_err(|e| Failure::Run(format!("{}: {e}", out.display())))?;
        write_record(out, name, cfg)?;
    }
    Ok(v)
}

#[derive(Debug, Args)]
pub struct ManifestArgs {
    /// OSCD root holding images/ and {train,test}_labels/.
    #[arg(long)]
    root: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Overrides for ManifestArgs {}

pub fn manifest(a: &ManifestArgs, cfg: &RunConfig, name: &str) -> Result<Value, Failure> {
    let out = required(&a.out, &cfg.paths.out, "out")?;
    let m = scan_oscd(&a.root)?;
    std::fs::write(&out, m.to_json()).map_err(|e| Failure::Run(format!("{}: {e}", out.display())))?;
    let record = write_record(&out, name, cfg)?;
    Ok(json!({
        "entries": m.entries.len(),
        "train": m.entries_in(Split::Train).count(),
        "test": m.entries_in(Split::Test).count(),
        "manifest": out,
        "record": record,
    }))
}
