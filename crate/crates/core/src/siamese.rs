//! Weight-shared Siamese encoder with a bottleneck difference and a
//! transpose-convolution decoder producing per-pixel change log-probabilities.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{augment, class_weights_from_labels, Dihedral, PatchPair};
use crate::raster::{GeoTransform, Raster};
use crate::tensor::{sgd_step, Element, Parameter, SgdConfig, Tape, Tensor, Var};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiffMode {
    /// `|f_a - f_b|` per channel.
    Absolute,
    /// Per-pixel L2 norm over channels, one channel out.
    Euclidean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SiameseConfig {
    pub in_bands: usize,
    pub encoder_channels: Vec<usize>,
    pub patch_size: usize,
    pub diff_mode: DiffMode,
}

impl Default for SiameseConfig {
    fn default() -> Self {
        SiameseConfig {
            in_bands: 13,
            encoder_channels: vec![16, 32, 64, 128],
            patch_size: 32,
            diff_mode: DiffMode::Absolute,
        }
    }
}

impl SiameseConfig {
    pub fn validate(&self) -> Result<()> {
        let c = &self.encoder_channels;
        if self.in_bands == 0 {
            return Err(Error::Config("in_bands must be >= 1".into()));
        }
        if c.is_empty() || c[0] == 0 || c.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(format!(
                "encoder_channels must be nonempty, positive and increasing: {c:?}"
            )));
        }
        let p = self.patch_size;
        if !p.is_power_of_two() || !p.is_multiple_of(1 << c.len()) {
            return Err(Error::Config(format!(
                "patch_size {p} must be a power of two divisible by 2^{}",
                c.len()
            )));
        }
        Ok(())
    }

    pub fn depth(&self) -> usize {
        self.encoder_channels.len()
    }

    /// Parameter names and shapes in storage order, with each weight's fan-in.
    fn layout(&self) -> Vec<(String, Vec<usize>, usize)> {
        let c = &self.encoder_channels;
        let l = c.len();
        let mut out = Vec::new();
        let mut prev = self.in_bands;
        for (i, &ch) in c.iter().enumerate() {
            out.push((format!("enc{i}.weight"), vec![ch, prev, 3, 3], prev * 9));
            out.push((format!("enc{i}.bias"), vec![ch], 0));
            prev = ch;
        }
        let mut prev = match self.diff_mode {
            DiffMode::Absolute => c[l - 1],
            DiffMode::Euclidean => 1,
        };
        for j in 0..l {
            let ch = if j + 1 < l { c[l - 2 - j] } else { c[0] };
            out.push((format!("dec{j}.weight"), vec![prev, ch, 2, 2], prev));
            out.push((format!("dec{j}.bias"), vec![ch], 0));
            prev = ch;
        }
        out.push(("head.weight".into(), vec![2, prev, 1, 1], prev));
        out.push(("head.bias".into(), vec![2], 0));
        out
    }
}

/// One parameter set; both branches of every forward pass read it.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T: Element = f32> {
    config: SiameseConfig,
    params: Vec<Parameter<T>>,
}

/// A recorded forward pass.
#[derive(Debug)]
pub struct Trace<T: Element> {
    pub tape: Tape<T>,
    pub params: Vec<Var>,
    pub out: Var,
    /// Encoder convolution nodes of the first and second branch.
    pub encoder_a: Vec<Var>,
    pub encoder_b: Vec<Var>,
}

/// Output of [`Network::forward_with`].
#[derive(Debug, Clone)]
pub struct ForwardVars {
    pub out: Var,
    pub encoder_a: Vec<Var>,
    pub encoder_b: Vec<Var>,
}

impl<T: Element> Network<T> {
    pub fn new(config: SiameseConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = config
            .layout()
            .into_iter()
            .map(|(name, shape, fan_in)| {
                if fan_in == 0 {
                    Parameter::zeros(name, &shape)
                } else {
                    Parameter::uniform(name, &shape, fan_in, &mut rng)
                }
            })
            .collect();
        Ok(Network { config, params })
    }

    pub fn config(&self) -> &SiameseConfig {
        &self.config
    }

    pub fn params(&self) -> &[Parameter<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Parameter<T>] {
        &mut self.params
    }

    pub fn cast<U: Element>(&self) -> Network<U> {
        Network {
            config: self.config.clone(),
            params: self.params.iter().map(Parameter::cast).collect(),
        }
    }

    /// Put every parameter on the tape once.
    pub fn register(&self, tape: &mut Tape<T>) -> Vec<Var> {
        self.params.iter().map(|p| tape.leaf(p.value.clone())).collect()
    }

    fn check_input(&self, t: &Tensor<T>) -> Result<()> {
        let (_, c, h, w) = t.dims4()?;
        let m = 1 << self.config.depth();
        if c != self.config.in_bands || h % m != 0 || w % m != 0 || h == 0 || w == 0 {
            return Err(Error::Shape(format!(
                "input {:?} needs {} bands and spatial size divisible by {m}",
                t.shape(),
                self.config.in_bands
            )));
        }
        Ok(())
    }

    fn encode(&self, tape: &mut Tape<T>, params: &[Var], mut x: Var, nodes: &mut Vec<Var>) -> Result<Var> {
        for i in 0..self.config.depth() {
            let conv = tape.conv2d(x, params[2 * i], params[2 * i + 1])?;
            nodes.push(conv);
            let act = tape.relu(conv)?;
            x = tape.maxpool2x2(act)?;
        }
        Ok(x)
    }

    /// Build the forward graph from already registered parameter variables.
    pub fn forward_with(&self, tape: &mut Tape<T>, params: &[Var], a: Var, b: Var) -> Result<ForwardVars> {
        if params.len() != self.params.len() {
            return Err(Error::Shape(format!(
                "{} parameter variables for a network with {}",
                params.len(),
                self.params.len()
            )));
        }
        self.check_input(tape.value(a))?;
        if tape.value(a).shape() != tape.value(b).shape() {
            return Err(Error::Shape(format!(
                "branch inputs differ: {:?} vs {:?}",
                tape.value(a).shape(),
                tape.value(b).shape()
            )));
        }
        let l = self.config.depth();
        let (mut encoder_a, mut encoder_b) = (Vec::new(), Vec::new());
        let fa = self.encode(tape, params, a, &mut encoder_a)?;
        let fb = self.encode(tape, params, b, &mut encoder_b)?;
        let mut x = match self.config.diff_mode {
            DiffMode::Absolute => tape.abs_diff(fa, fb)?,
            DiffMode::Euclidean => tape.l2_diff(fa, fb)?,
        };
        for j in 0..l {
            let k = 2 * (l + j);
            let up = tape.conv_transpose2d(x, params[k], Some(params[k + 1]))?;
            x = tape.relu(up)?;
        }
        let k = 4 * l;
        let logits = tape.conv2d(x, params[k], params[k + 1])?;
        let out = tape.log_softmax(logits)?;
        Ok(ForwardVars {
            out,
            encoder_a,
            encoder_b,
        })
    }

    pub fn trace(&self, a: &Tensor<T>, b: &Tensor<T>) -> Result<Trace<T>> {
        let mut tape = Tape::new();
        let params = self.register(&mut tape);
        let av = tape.leaf(a.clone());
        let bv = tape.leaf(b.clone());
        let f = self.forward_with(&mut tape, &params, av, bv)?;
        Ok(Trace {
            tape,
            params,
            out: f.out,
            encoder_a: f.encoder_a,
            encoder_b: f.encoder_b,
        })
    }

    /// Log-probabilities `(N, 2, H, W)` for a batch of patch pairs.
    pub fn forward(&self, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        let t = self.trace(a, b)?;
        Ok(t.tape.value(t.out).clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// `(w0, w1)`; inverse class frequency over the training patches if unset.
    pub class_weights: Option<(f64, f64)>,
    pub augment: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 16,
            lr: 0.01,
            momentum: 0.9,
            weight_decay: 0.0,
            class_weights: None,
            augment: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub class_weights: (f64, f64),
    pub trace: Vec<EpochStats>,
}

/// Stack patches into `(N, bands, p, p)` tensors and an `(N, p, p)` label list.
pub fn batch_tensors(patches: &[&PatchPair]) -> Result<(Tensor, Tensor, Vec<u8>)> {
    let first = patches
        .first()
        .ok_or_else(|| Error::Shape("empty batch".into()))?;
    let (bands, p) = (first.bands, first.patch);
    let (mut a, mut b, mut labels) = (Vec::new(), Vec::new(), Vec::new());
    for q in patches {
        if (q.bands, q.patch) != (bands, p) {
            return Err(Error::Shape("patches in a batch differ in size".into()));
        }
        a.extend_from_slice(&q.a);
        b.extend_from_slice(&q.b);
        labels.extend_from_slice(&q.label);
    }
    let shape = vec![patches.len(), bands, p, p];
    Ok((Tensor::new(shape.clone(), a)?, Tensor::new(shape, b)?, labels))
}

fn count_correct<T: Element>(logp: &Tensor<T>, labels: &[u8]) -> u64 {
    let (n, _, h, w) = logp.dims4().expect("network output is NCHW");
    let plane = h * w;
    let d = logp.data();
    let mut correct = 0;
    for ni in 0..n {
        for i in 0..plane {
            let pred = (d[(ni * 2 + 1) * plane + i] > d[ni * 2 * plane + i]) as u8;
            correct += (pred == labels[ni * plane + i]) as u64;
        }
    }
    correct
}

/// Minibatch momentum SGD on the weighted NLL loss.
pub fn train(net: &mut Network<f32>, patches: &[PatchPair], cfg: &TrainConfig) -> Result<TrainReport> {
    if patches.is_empty() {
        return Err(Error::DegenerateSplit("no training patches".into()));
    }
    if cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(Error::Config("epochs and batch_size must be >= 1".into()));
    }
    let sgd = SgdConfig {
        lr: cfg.lr,
        momentum: cfg.momentum,
        weight_decay: cfg.weight_decay,
    };
    sgd.validate()?;
    let weights = match cfg.class_weights {
        Some(w) => w,
        None => match class_weights_from_labels(patches.iter().flat_map(|p| &p.label)) {
            Ok(w) => w,
            Err(e) => {
                log::warn!("{e}; using unit class weights");
                (1.0, 1.0)
            }
        },
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..patches.len()).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct, mut pixels) = (0.0, 0u64, 0u64);
        for (bi, idx) in order.chunks(cfg.batch_size).enumerate() {
            let augmented: Vec<PatchPair>;
            let batch: Vec<&PatchPair> = if cfg.augment {
                augmented = idx
                    .iter()
                    .map(|&i| augment(&patches[i], Dihedral::ALL[rng.random_range(0..8)]))
                    .collect();
                augmented.iter().collect()
            } else {
                idx.iter().map(|&i| &patches[i]).collect()
            };
            let fault = |e: Error| match e {
                Error::NumericFault(msg) => {
                    Error::NumericFault(format!("epoch {epoch}, batch {bi}: {msg}"))
                }
                other => other,
            };
            let (a, b, labels) = batch_tensors(&batch)?;
            let mut tape = Tape::new();
            let pv = net.register(&mut tape);
            let (av, bv) = (tape.leaf(a), tape.leaf(b));
            let f = net.forward_with(&mut tape, &pv, av, bv).map_err(fault)?;
            let loss = tape.nll_weighted(f.out, &labels, weights).map_err(fault)?;
            let grads = tape.backward_scalar(loss).map_err(fault)?;
            for (p, v) in net.params.iter_mut().zip(&pv) {
                if let Some(g) = grads.get(*v) {
                    p.accumulate_grad(g);
                }
            }
            sgd_step(&mut net.params, &sgd).map_err(fault)?;

            loss_sum += tape.value(loss).data()[0] as f64 * batch.len() as f64;
            correct += count_correct(tape.value(f.out), &labels);
            pixels += labels.len() as u64;
        }
        let stats = EpochStats {
            epoch,
            loss: loss_sum / patches.len() as f64,
            accuracy: correct as f64 / pixels as f64,
        };
        log::info!("epoch {epoch}: loss {:.5}, pixel accuracy {:.4}", stats.loss, stats.accuracy);
        trace.push(stats);
    }
    Ok(TrainReport {
        class_weights: weights,
        trace,
    })
}

/// Pixel accuracy of the network on a patch set.
pub fn evaluate_patches(net: &Network<f32>, patches: &[PatchPair], batch_size: usize) -> Result<f64> {
    let (mut correct, mut pixels) = (0u64, 0u64);
    for chunk in patches.chunks(batch_size.max(1)) {
        let refs: Vec<&PatchPair> = chunk.iter().collect();
        let (a, b, labels) = batch_tensors(&refs)?;
        correct += count_correct(&net.forward(&a, &b)?, &labels);
        pixels += labels.len() as u64;
    }
    if pixels == 0 {
        return Err(Error::Shape("no patches to evaluate".into()));
    }
    Ok(correct as f64 / pixels as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChangeMap {
    pub width: usize,
    pub height: usize,
    /// 1 = change.
    pub labels: Vec<u8>,
    /// Probability of change.
    pub probabilities: Vec<f32>,
    pub geo: GeoTransform,
}

impl ChangeMap {
    pub fn label_raster(&self) -> Result<Raster> {
        Raster::new(
            self.width,
            self.height,
            vec!["change".into()],
            self.labels.iter().map(|&l| l as f32).collect(),
            self.geo,
        )
    }

    pub fn probability_raster(&self) -> Result<Raster> {
        Raster::new(
            self.width,
            self.height,
            vec!["change_probability".into()],
            self.probabilities.clone(),
            self.geo,
        )
    }
}

fn reflect(i: usize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let m = i % period;
    if m < n {
        m
    } else {
        period - m
    }
}

fn padded_extent(n: usize, p: usize, stride: usize) -> usize {
    if n <= p {
        p
    } else {
        p + (n - p).div_ceil(stride) * stride
    }
}

const TILE_BATCH: usize = 8;

/// Whole-scene inference with half-overlapping tiles. Log-probabilities are
/// averaged over the tiles covering each pixel; the scene is extended by
/// edge reflection so every tile is full.
pub fn predict_scene(net: &Network<f32>, a: &Raster, b: &Raster) -> Result<ChangeMap> {
    let cfg = net.config();
    if a.bands() != cfg.in_bands || b.bands() != cfg.in_bands {
        return Err(Error::Shape(format!(
            "scenes have {} and {} bands, network expects {}",
            a.bands(),
            b.bands(),
            cfg.in_bands
        )));
    }
    if (a.width(), a.height()) != (b.width(), b.height()) {
        return Err(Error::Shape("scene dimensions differ".into()));
    }
    let (w, h, p) = (a.width(), a.height(), cfg.patch_size);
    let stride = p / 2;
    let (pw, ph) = (padded_extent(w, p, stride), padded_extent(h, p, stride));
    let origins: Vec<(usize, usize)> = (0..=ph - p)
        .step_by(stride)
        .flat_map(|y| (0..=pw - p).step_by(stride).map(move |x| (x, y)))
        .collect();

    let cut = |s: &Raster, ox: usize, oy: usize, out: &mut Vec<f32>| {
        for band in 0..s.bands() {
            let data = s.band(band);
            for y in 0..p {
                let row = reflect(oy + y, h) * w;
                out.extend((0..p).map(|x| data[row + reflect(ox + x, w)]));
            }
        }
    };
    let outputs: Vec<Result<Tensor>> = origins
        .par_chunks(TILE_BATCH)
        .map(|chunk| {
            let (mut ta, mut tb) = (Vec::new(), Vec::new());
            for &(ox, oy) in chunk {
                cut(a, ox, oy, &mut ta);
                cut(b, ox, oy, &mut tb);
            }
            let shape = vec![chunk.len(), cfg.in_bands, p, p];
            net.forward(&Tensor::new(shape.clone(), ta)?, &Tensor::new(shape, tb)?)
        })
        .collect();

    let mut sum = vec![[0f64; 2]; w * h];
    let mut hits = vec![0u32; w * h];
    for (chunk, out) in origins.chunks(TILE_BATCH).zip(outputs) {
        let out = out?;
        let d = out.data();
        for (k, &(ox, oy)) in chunk.iter().enumerate() {
            for y in 0..p {
                let sy = oy + y;
                if sy >= h {
                    break;
                }
                for x in 0..p {
                    let sx = ox + x;
                    if sx >= w {
                        break;
                    }
                    let i = y * p + x;
                    let s = &mut sum[sy * w + sx];
                    s[0] += d[(k * 2) * p * p + i] as f64;
                    s[1] += d[(k * 2 + 1) * p * p + i] as f64;
                    hits[sy * w + sx] += 1;
                }
            }
        }
    }
    let mut labels = Vec::with_capacity(w * h);
    let mut probabilities = Vec::with_capacity(w * h);
    for (s, &n) in sum.iter().zip(&hits) {
        let (l0, l1) = (s[0] / n as f64, s[1] / n as f64);
        let m = l0.max(l1);
        let (e0, e1) = ((l0 - m).exp(), (l1 - m).exp());
        probabilities.push((e1 / (e0 + e1)) as f32);
        labels.push((l1 > l0) as u8);
    }
    Ok(ChangeMap {
        width: w,
        height: h,
        labels,
        probabilities,
        geo: *a.geo(),
    })
}

const MAGIC: &[u8; 4] = b"SCDC";
const VERSION: u32 = 1;

/// Raw checkpoint record: name, dims and data of one parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredParam {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl<T: Element> Network<T> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for p in &self.params {
            out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
            out.extend_from_slice(p.name.as_bytes());
            out.extend_from_slice(&(p.value.shape().len() as u32).to_le_bytes());
            for &d in p.value.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in p.value.data() {
                out.extend_from_slice(&(v.to_f64() as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn from_bytes(bytes: &[u8], config: &SiameseConfig) -> Result<Self> {
        let stored = parse_checkpoint(bytes)?;
        let mut net = Network::<T>::new(config.clone(), 0)?;
        if stored.len() != net.params.len() {
            return Err(Error::IncompatibleCheckpoint(format!(
                "checkpoint has {} parameters, configuration needs {}",
                stored.len(),
                net.params.len()
            )));
        }
        for (p, s) in net.params.iter_mut().zip(stored) {
            if p.name != s.name || p.value.shape() != s.dims.as_slice() {
                return Err(Error::IncompatibleCheckpoint(format!(
                    "stored {} {:?} where configuration expects {} {:?}",
                    s.name,
                    s.dims,
                    p.name,
                    p.value.shape()
                )));
            }
            let data = s.data.iter().map(|&v| T::from_f64(v as f64)).collect();
            *p = Parameter::new(s.name, Tensor::new(s.dims, data)?);
        }
        Ok(net)
    }

    pub fn load(path: &Path, config: &SiameseConfig) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Network::from_bytes(&bytes, config)
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            Error::Parse(format!("checkpoint truncated at byte {} (needs {n} more)", self.pos))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

/// Decode a checkpoint container without checking it against a configuration.
pub fn parse_checkpoint(bytes: &[u8]) -> Result<Vec<StoredParam>> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err(Error::Parse("not a checkpoint (bad magic)".into()));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(Error::Parse(format!("unsupported checkpoint version {version}")));
    }
    let count = c.u32()? as usize;
    let mut out = Vec::new();
    for _ in 0..count {
        let len = c.u32()? as usize;
        let name = String::from_utf8(c.take(len)?.to_vec())
            .map_err(|_| Error::Parse("parameter name is not UTF-8".into()))?;
        let rank = c.u32()? as usize;
        let dims = (0..rank).map(|_| c.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
        let n = n.ok_or_else(|| Error::Parse(format!("dims of {name} overflow")))?;
        let raw = c.take(n.checked_mul(4).ok_or_else(|| Error::Parse("size overflow".into()))?)?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        out.push(StoredParam { name, dims, data });
    }
    if c.pos != bytes.len() {
        return Err(Error::Parse(format!(
            "{} trailing bytes after the last parameter",
            bytes.len() - c.pos
        )));
    }
    Ok(out)
}

/// Recover the architecture from stored parameter shapes. The patch size is
/// not recorded in checkpoints and has to be supplied.
pub fn config_from_checkpoint(bytes: &[u8], patch_size: usize) -> Result<SiameseConfig> {
    let stored = parse_checkpoint(bytes)?;
    let dims = |name: &str| stored.iter().find(|s| s.name == name).map(|s| s.dims.clone());
    let mut channels = Vec::new();
    let mut in_bands = None;
    while let Some(d) = dims(&format!("enc{}.weight", channels.len())) {
        if d.len() != 4 {
            return Err(Error::IncompatibleCheckpoint("encoder weight is not rank 4".into()));
        }
        in_bands.get_or_insert(d[1]);
        channels.push(d[0]);
    }
    let in_bands = in_bands.ok_or_else(|| Error::IncompatibleCheckpoint("no encoder weights".into()))?;
    let dec0 = dims("dec0.weight").ok_or_else(|| Error::IncompatibleCheckpoint("no decoder weights".into()))?;
    let diff_mode = if dec0[0] == 1 && *channels.last().expect("nonempty") != 1 {
        DiffMode::Euclidean
    } else {
        DiffMode::Absolute
    };
    let cfg = SiameseConfig {
        in_bands,
        encoder_channels: channels,
        patch_size,
        diff_mode,
    };
    cfg.validate()?;
    Ok(cfg)
}
