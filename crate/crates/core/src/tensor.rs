//! A small reverse-mode autodiff engine over NCHW tensors.
//!
//! Operations are recorded on a [`Tape`]; [`Tape::backward`] walks it in
//! reverse and accumulates gradients in `f64`. Tensors are generic over the
//! storage [`Element`] so the same kernels run in `f32` for training and in
//! `f64` for finite-difference gradient checks.

use std::fmt::Debug;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Storage scalar for tensors. All arithmetic is carried out in `f64`.
pub trait Element: Copy + Default + PartialEq + PartialOrd + Debug + Send + Sync + 'static {
    fn to_f64(self) -> f64;
    fn from_f64(v: f64) -> Self;
    fn is_finite(self) -> bool;
}

impl Element for f32 {
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn is_finite(self) -> bool {
        f32::is_finite(self)
    }
}

impl Element for f64 {
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T: Element = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Element> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {n} elements, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![T::default(); shape.iter().product()],
        }
    }

    pub fn scalar(v: T) -> Self {
        Tensor {
            shape: vec![],
            data: vec![v],
        }
    }

    pub fn from_f64(shape: &[usize], data: &[f64]) -> Result<Self> {
        Tensor::new(shape.to_vec(), data.iter().map(|&v| T::from_f64(v)).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.to_f64()).collect()
    }

    pub fn cast<U: Element>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::from_f64(v.to_f64())).collect(),
        }
    }

    /// `(N, C, H, W)` of a rank-4 tensor.
    pub fn dims4(&self) -> Result<(usize, usize, usize, usize)> {
        match self.shape[..] {
            [n, c, h, w] => Ok((n, c, h, w)),
            _ => Err(Error::Shape(format!("expected NCHW tensor, got shape {:?}", self.shape))),
        }
    }

    fn check_finite(&self, op: &str) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(Error::NumericFault(format!("{op} produced a non-finite value at {i}"))),
            None => Ok(()),
        }
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv2d { x: Var, w: Var, b: Var },
    ConvTranspose2d { x: Var, w: Var, b: Option<Var> },
    MaxPool2x2 { x: Var, argmax: Vec<usize> },
    Relu { x: Var },
    AbsDiff { a: Var, b: Var },
    L2Diff { a: Var, b: Var },
    LogSoftmax { x: Var },
    NllWeighted { logp: Var, target: Vec<u8>, weights: [f64; 2], norm: f64 },
}

#[derive(Debug)]
struct Node<T: Element> {
    value: Tensor<T>,
    op: Op,
}

/// Record of a forward computation, replayable in reverse for gradients.
#[derive(Debug, Default)]
pub struct Tape<T: Element = f32> {
    nodes: Vec<Node<T>>,
}

/// Gradients of one backward pass, indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

fn add_into(slot: &mut Option<Vec<f64>>, len: usize) -> &mut Vec<f64> {
    slot.get_or_insert_with(|| vec![0.0; len])
}

impl<T: Element> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Inputs read by the node behind `v`, in argument order.
    pub fn inputs(&self, v: Var) -> Vec<Var> {
        match &self.nodes[v.0].op {
            Op::Leaf => vec![],
            Op::Conv2d { x, w, b } => vec![*x, *w, *b],
            Op::ConvTranspose2d { x, w, b } => [Some(*x), Some(*w), *b].into_iter().flatten().collect(),
            Op::MaxPool2x2 { x, .. } | Op::Relu { x } | Op::LogSoftmax { x } => vec![*x],
            Op::AbsDiff { a, b } | Op::L2Diff { a, b } => vec![*a, *b],
            Op::NllWeighted { logp, .. } => vec![*logp],
        }
    }

    fn push(&mut self, value: Tensor<T>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn push_checked(&mut self, value: Tensor<T>, op: Op, name: &str) -> Result<Var> {
        value.check_finite(name)?;
        Ok(self.push(value, op))
    }

    /// Stride-1 convolution (cross-correlation) with an odd square kernel and
    /// "same" zero padding of `k / 2`. Weight is `(C_out, C_in, k, k)`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (n, ci, h, wd) = self.value(x).dims4()?;
        let (co, wci, k, k2) = self.value(w).dims4()?;
        if wci != ci {
            return Err(Error::Shape(format!(
                "conv2d input has {ci} channels, kernel expects {wci}"
            )));
        }
        if k != k2 || k % 2 == 0 {
            return Err(Error::Shape(format!("conv2d kernel must be odd and square, got {k}x{k2}")));
        }
        if self.value(b).shape() != [co] {
            return Err(Error::Shape(format!(
                "conv2d bias shape {:?}, expected [{co}]",
                self.value(b).shape()
            )));
        }
        let p = k / 2;
        let xs = self.value(x).to_f64_vec();
        let ws = self.value(w).to_f64_vec();
        let bs = self.value(b).to_f64_vec();
        let plane = h * wd;
        let mut out = Vec::with_capacity(n * co * plane);
        let mut acc = vec![0f64; plane];
        for ni in 0..n {
            for o in 0..co {
                acc.fill(bs[o]);
                for c in 0..ci {
                    let xin = &xs[(ni * ci + c) * plane..][..plane];
                    for ky in 0..k {
                        let (y0, y1) = (p.saturating_sub(ky), (h + p).saturating_sub(ky).min(h));
                        for kx in 0..k {
                            let wv = ws[((o * ci + c) * k + ky) * k + kx];
                            let (x0, x1) = (p.saturating_sub(kx), (wd + p).saturating_sub(kx).min(wd));
                            for y in y0..y1 {
                                let src = &xin[(y + ky - p) * wd..][..wd];
                                let dst = &mut acc[y * wd..][..wd];
                                for xx in x0..x1 {
                                    dst[xx] += wv * src[xx + kx - p];
                                }
                            }
                        }
                    }
                }
                out.extend(acc.iter().map(|&v| T::from_f64(v)));
            }
        }
        let t = Tensor::new(vec![n, co, h, wd], out)?;
        self.push_checked(t, Op::Conv2d { x, w, b }, "conv2d")
    }

    /// Stride-2 transposed convolution with a 2x2 kernel `(C_in, C_out, 2, 2)`;
    /// doubles the spatial size.
    pub fn conv_transpose2d(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (n, ci, h, wd) = self.value(x).dims4()?;
        let (wci, co, kh, kw) = self.value(w).dims4()?;
        if wci != ci {
            return Err(Error::Shape(format!(
                "conv_transpose2d input has {ci} channels, kernel expects {wci}"
            )));
        }
        if (kh, kw) != (2, 2) {
            return Err(Error::Shape(format!("conv_transpose2d kernel must be 2x2, got {kh}x{kw}")));
        }
        let bs = match b {
            Some(b) => {
                if self.value(b).shape() != [co] {
                    return Err(Error::Shape(format!(
                        "conv_transpose2d bias shape {:?}, expected [{co}]",
                        self.value(b).shape()
                    )));
                }
                self.value(b).to_f64_vec()
            }
            None => vec![0.0; co],
        };
        let xs = self.value(x).to_f64_vec();
        let ws = self.value(w).to_f64_vec();
        let (oh, ow) = (2 * h, 2 * wd);
        let mut out = vec![0f64; n * co * oh * ow];
        for ni in 0..n {
            for o in 0..co {
                let dst = &mut out[(ni * co + o) * oh * ow..][..oh * ow];
                dst.fill(bs[o]);
                for c in 0..ci {
                    let src = &xs[(ni * ci + c) * h * wd..][..h * wd];
                    for ky in 0..2 {
                        for kx in 0..2 {
                            let wv = ws[((c * co + o) * 2 + ky) * 2 + kx];
                            for y in 0..h {
                                for xx in 0..wd {
                                    dst[(2 * y + ky) * ow + 2 * xx + kx] += wv * src[y * wd + xx];
                                }
                            }
                        }
                    }
                }
            }
        }
        let t = Tensor::new(vec![n, co, oh, ow], out.into_iter().map(T::from_f64).collect())?;
        self.push_checked(t, Op::ConvTranspose2d { x, w, b }, "conv_transpose2d")
    }

    /// 2x2 max pooling with stride 2. Odd spatial sizes are rejected.
    pub fn maxpool2x2(&mut self, x: Var) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4()?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::Shape(format!("maxpool2x2 needs even spatial size, got {h}x{w}")));
        }
        let (oh, ow) = (h / 2, w / 2);
        let xs = self.value(x).data();
        let mut out = Vec::with_capacity(n * c * oh * ow);
        let mut argmax = Vec::with_capacity(n * c * oh * ow);
        for plane in 0..n * c {
            let base = plane * h * w;
            for y in 0..oh {
                for xx in 0..ow {
                    let mut best = base + 2 * y * w + 2 * xx;
                    for idx in [
                        base + 2 * y * w + 2 * xx + 1,
                        base + (2 * y + 1) * w + 2 * xx,
                        base + (2 * y + 1) * w + 2 * xx + 1,
                    ] {
                        if xs[idx] > xs[best] {
                            best = idx;
                        }
                    }
                    out.push(xs[best]);
                    argmax.push(best);
                }
            }
        }
        let t = Tensor::new(vec![n, c, oh, ow], out)?;
        self.push_checked(t, Op::MaxPool2x2 { x, argmax }, "maxpool2x2")
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let src = self.value(x);
        let zero = T::default();
        let data = src.data().iter().map(|&v| if v > zero { v } else { zero }).collect();
        let t = Tensor::new(src.shape().to_vec(), data)?;
        self.push_checked(t, Op::Relu { x }, "relu")
    }

    /// Elementwise `|a - b|`.
    pub fn abs_diff(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::Shape(format!(
                "abs_diff operands {:?} and {:?} differ",
                ta.shape(),
                tb.shape()
            )));
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&p, &q)| T::from_f64((p.to_f64() - q.to_f64()).abs()))
            .collect();
        let t = Tensor::new(ta.shape().to_vec(), data)?;
        self.push_checked(t, Op::AbsDiff { a, b }, "abs_diff")
    }

    /// Per-pixel Euclidean distance across channels: `(N,C,H,W) -> (N,1,H,W)`.
    pub fn l2_diff(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::Shape(format!(
                "l2_diff operands {:?} and {:?} differ",
                ta.shape(),
                tb.shape()
            )));
        }
        let (n, c, h, w) = ta.dims4()?;
        let plane = h * w;
        let mut out = Vec::with_capacity(n * plane);
        for ni in 0..n {
            for i in 0..plane {
                let mut s = 0.0;
                for ch in 0..c {
                    let idx = (ni * c + ch) * plane + i;
                    let d = ta.data()[idx].to_f64() - tb.data()[idx].to_f64();
                    s += d * d;
                }
                out.push(T::from_f64(s.sqrt()));
            }
        }
        let t = Tensor::new(vec![n, 1, h, w], out)?;
        self.push_checked(t, Op::L2Diff { a, b }, "l2_diff")
    }

    /// Log-softmax over the channel axis of an NCHW tensor.
    pub fn log_softmax(&mut self, x: Var) -> Result<Var> {
        let src = self.value(x);
        let (n, c, h, w) = src.dims4()?;
        if c < 2 {
            return Err(Error::Shape(format!("log_softmax needs >= 2 channels, got {c}")));
        }
        let plane = h * w;
        let xs = src.data();
        let mut out = vec![T::default(); xs.len()];
        for ni in 0..n {
            for i in 0..plane {
                let at = |ch: usize| (ni * c + ch) * plane + i;
                let m = (0..c).map(|ch| xs[at(ch)].to_f64()).fold(f64::NEG_INFINITY, f64::max);
                let sum: f64 = (0..c).map(|ch| (xs[at(ch)].to_f64() - m).exp()).sum();
                let lse = m + sum.ln();
                for ch in 0..c {
                    out[at(ch)] = T::from_f64(xs[at(ch)].to_f64() - lse);
                }
            }
        }
        let t = Tensor::new(src.shape().to_vec(), out)?;
        self.push_checked(t, Op::LogSoftmax { x }, "log_softmax")
    }

    /// Class-weighted mean negative log-likelihood of a two-class map.
    ///
    /// `loss = -sum(w[t] * logp[t]) / sum(w[t])` over all pixels, with `target`
    /// laid out `(N, H, W)`.
    pub fn nll_weighted(&mut self, logp: Var, target: &[u8], weights: (f64, f64)) -> Result<Var> {
        let (n, c, h, w) = self.value(logp).dims4()?;
        if c != 2 {
            return Err(Error::Shape(format!("nll_weighted expects 2 channels, got {c}")));
        }
        if target.len() != n * h * w {
            return Err(Error::Shape(format!(
                "target has {} labels, log-probabilities cover {} pixels",
                target.len(),
                n * h * w
            )));
        }
        if let Some(bad) = target.iter().find(|&&t| t > 1) {
            return Err(Error::Label(format!("target value {bad} is not in {{0, 1}}")));
        }
        let ws = [weights.0, weights.1];
        if ws.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config(format!("class weights must be finite and >= 0: {ws:?}")));
        }
        let lp = self.value(logp).data();
        let plane = h * w;
        let mut num = 0.0;
        let mut norm = 0.0;
        for ni in 0..n {
            for i in 0..plane {
                let t = target[ni * plane + i] as usize;
                num += ws[t] * lp[(ni * 2 + t) * plane + i].to_f64();
                norm += ws[t];
            }
        }
        if norm <= 0.0 {
            return Err(Error::NumericFault("class weights sum to zero over the batch".into()));
        }
        let t = Tensor::scalar(T::from_f64(-num / norm));
        self.push_checked(
            t,
            Op::NllWeighted {
                logp,
                target: target.to_vec(),
                weights: ws,
                norm,
            },
            "nll_weighted",
        )
    }

    /// Reverse pass from `out` seeded with `d(objective)/d(out) = seed`.
    pub fn backward(&self, out: Var, seed: &Tensor<T>) -> Result<Gradients> {
        if seed.shape() != self.value(out).shape() {
            return Err(Error::Shape(format!(
                "seed shape {:?} does not match output {:?}",
                seed.shape(),
                self.value(out).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; out.0 + 1];
        grads[out.0] = Some(seed.to_f64_vec());
        for idx in (0..=out.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        for (i, g) in grads.iter().enumerate() {
            if let Some(g) = g {
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NumericFault(format!("non-finite gradient at node {i}")));
                }
            }
        }
        Ok(Gradients { grads })
    }

    /// Reverse pass from a scalar output.
    pub fn backward_scalar(&self, out: Var) -> Result<Gradients> {
        let shape = self.value(out).shape().to_vec();
        if shape.iter().product::<usize>() != 1 {
            return Err(Error::Shape(format!("backward_scalar on output of shape {shape:?}")));
        }
        let one = Tensor::new(shape, vec![T::from_f64(1.0)])?;
        self.backward(out, &one)
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        match &self.nodes[idx].op {
            Op::Leaf => {}
            Op::Relu { x } => {
                let xs = self.value(*x).data();
                let gx = add_into(&mut grads[x.0], xs.len());
                for i in 0..xs.len() {
                    if xs[i].to_f64() > 0.0 {
                        gx[i] += g[i];
                    }
                }
            }
            Op::MaxPool2x2 { x, argmax } => {
                let len = self.value(*x).len();
                let gx = add_into(&mut grads[x.0], len);
                for (o, &src) in argmax.iter().enumerate() {
                    gx[src] += g[o];
                }
            }
            Op::AbsDiff { a, b } => {
                let (ta, tb) = (self.value(*a).data(), self.value(*b).data());
                let sign: Vec<f64> = ta
                    .iter()
                    .zip(tb)
                    .map(|(p, q)| {
                        let d = p.to_f64() - q.to_f64();
                        if d > 0.0 {
                            1.0
                        } else if d < 0.0 {
                            -1.0
                        } else {
                            0.0
                        }
                    })
                    .collect();
                let ga = add_into(&mut grads[a.0], sign.len());
                for i in 0..sign.len() {
                    ga[i] += sign[i] * g[i];
                }
                let gb = add_into(&mut grads[b.0], sign.len());
                for i in 0..sign.len() {
                    gb[i] -= sign[i] * g[i];
                }
            }
            Op::L2Diff { a, b } => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (n, c, h, w) = ta.dims4().expect("checked in forward");
                let dist = self.nodes[idx].value.data();
                let plane = h * w;
                let mut scaled = vec![0.0; ta.len()];
                for ni in 0..n {
                    for i in 0..plane {
                        let d = dist[ni * plane + i].to_f64();
                        if d == 0.0 {
                            continue;
                        }
                        let k = g[ni * plane + i] / d;
                        for ch in 0..c {
                            let at = (ni * c + ch) * plane + i;
                            scaled[at] = k * (ta.data()[at].to_f64() - tb.data()[at].to_f64());
                        }
                    }
                }
                let ga = add_into(&mut grads[a.0], scaled.len());
                ga.iter_mut().zip(&scaled).for_each(|(p, s)| *p += s);
                let gb = add_into(&mut grads[b.0], scaled.len());
                gb.iter_mut().zip(&scaled).for_each(|(p, s)| *p -= s);
            }
            Op::LogSoftmax { x } => {
                let out = self.nodes[idx].value.data();
                let (n, c, h, w) = self.nodes[idx].value.dims4().expect("checked in forward");
                let plane = h * w;
                let gx = add_into(&mut grads[x.0], out.len());
                for ni in 0..n {
                    for i in 0..plane {
                        let at = |ch: usize| (ni * c + ch) * plane + i;
                        let gsum: f64 = (0..c).map(|ch| g[at(ch)]).sum();
                        for ch in 0..c {
                            gx[at(ch)] += g[at(ch)] - out[at(ch)].to_f64().exp() * gsum;
                        }
                    }
                }
            }
            Op::NllWeighted {
                logp,
                target,
                weights,
                norm,
            } => {
                let (n, _, h, w) = self.value(*logp).dims4().expect("checked in forward");
                let plane = h * w;
                let gl = add_into(&mut grads[logp.0], n * 2 * plane);
                for ni in 0..n {
                    for i in 0..plane {
                        let t = target[ni * plane + i] as usize;
                        gl[(ni * 2 + t) * plane + i] -= g[0] * weights[t] / norm;
                    }
                }
            }
            Op::Conv2d { x, w, b } => self.conv2d_backward(*x, *w, *b, g, grads),
            Op::ConvTranspose2d { x, w, b } => self.conv_transpose2d_backward(*x, *w, *b, g, grads),
        }
    }

    fn conv2d_backward(&self, x: Var, w: Var, b: Var, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let (n, ci, h, wd) = self.value(x).dims4().expect("checked in forward");
        let (co, _, k, _) = self.value(w).dims4().expect("checked in forward");
        let p = k / 2;
        let plane = h * wd;
        let xs = self.value(x).to_f64_vec();
        let ws = self.value(w).to_f64_vec();
        let mut gx = vec![0.0; xs.len()];
        let mut gw = vec![0.0; ws.len()];
        let mut gb = vec![0.0; co];
        for ni in 0..n {
            for o in 0..co {
                let gout = &g[(ni * co + o) * plane..][..plane];
                gb[o] += gout.iter().sum::<f64>();
                for c in 0..ci {
                    let xin = &xs[(ni * ci + c) * plane..][..plane];
                    let gin = &mut gx[(ni * ci + c) * plane..][..plane];
                    for ky in 0..k {
                        let (y0, y1) = (p.saturating_sub(ky), (h + p).saturating_sub(ky).min(h));
                        for kx in 0..k {
                            let widx = ((o * ci + c) * k + ky) * k + kx;
                            let wv = ws[widx];
                            let (x0, x1) = (p.saturating_sub(kx), (wd + p).saturating_sub(kx).min(wd));
                            let mut acc = 0.0;
                            for y in y0..y1 {
                                let row = (y + ky - p) * wd;
                                let grow = &gout[y * wd..][..wd];
                                for xx in x0..x1 {
                                    let src = row + xx + kx - p;
                                    acc += grow[xx] * xin[src];
                                    gin[src] += grow[xx] * wv;
                                }
                            }
                            gw[widx] += acc;
                        }
                    }
                }
            }
        }
        accumulate(&mut grads[x.0], gx);
        accumulate(&mut grads[w.0], gw);
        accumulate(&mut grads[b.0], gb);
    }

    fn conv_transpose2d_backward(
        &self,
        x: Var,
        w: Var,
        b: Option<Var>,
        g: &[f64],
        grads: &mut [Option<Vec<f64>>],
    ) {
        let (n, ci, h, wd) = self.value(x).dims4().expect("checked in forward");
        let (_, co, _, _) = self.value(w).dims4().expect("checked in forward");
        let (oh, ow) = (2 * h, 2 * wd);
        let xs = self.value(x).to_f64_vec();
        let ws = self.value(w).to_f64_vec();
        let mut gx = vec![0.0; xs.len()];
        let mut gw = vec![0.0; ws.len()];
        let mut gb = vec![0.0; co];
        for ni in 0..n {
            for o in 0..co {
                let gout = &g[(ni * co + o) * oh * ow..][..oh * ow];
                gb[o] += gout.iter().sum::<f64>();
                for c in 0..ci {
                    let src = &xs[(ni * ci + c) * h * wd..][..h * wd];
                    let gin = &mut gx[(ni * ci + c) * h * wd..][..h * wd];
                    for ky in 0..2 {
                        for kx in 0..2 {
                            let widx = ((c * co + o) * 2 + ky) * 2 + kx;
                            let wv = ws[widx];
                            let mut acc = 0.0;
                            for y in 0..h {
                                for xx in 0..wd {
                                    let go = gout[(2 * y + ky) * ow + 2 * xx + kx];
                                    acc += go * src[y * wd + xx];
                                    gin[y * wd + xx] += go * wv;
                                }
                            }
                            gw[widx] += acc;
                        }
                    }
                }
            }
        }
        accumulate(&mut grads[x.0], gx);
        accumulate(&mut grads[w.0], gw);
        if let Some(b) = b {
            accumulate(&mut grads[b.0], gb);
        }
    }
}

fn accumulate(slot: &mut Option<Vec<f64>>, add: Vec<f64>) {
    match slot {
        Some(existing) => existing.iter_mut().zip(add).for_each(|(e, a)| *e += a),
        None => *slot = Some(add),
    }
}

/// A named trainable tensor with its gradient and momentum buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter<T: Element = f32> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Vec<T>,
    pub velocity: Vec<T>,
}

impl<T: Element> Parameter<T> {
    pub fn new(name: impl Into<String>, value: Tensor<T>) -> Self {
        let n = value.len();
        Parameter {
            name: name.into(),
            value,
            grad: vec![T::default(); n],
            velocity: vec![T::default(); n],
        }
    }

    /// Uniform in `±sqrt(6 / fan_in)`.
    pub fn uniform(name: impl Into<String>, shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Self {
        let bound = (6.0 / fan_in as f64).sqrt();
        let n = shape.iter().product();
        let data = (0..n).map(|_| T::from_f64(rng.random_range(-bound..bound))).collect();
        Parameter::new(name, Tensor { shape: shape.to_vec(), data })
    }

    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Self {
        Parameter::new(name, Tensor::zeros(shape))
    }

    pub fn accumulate_grad(&mut self, g: &[f64]) {
        for (p, &d) in self.grad.iter_mut().zip(g) {
            *p = T::from_f64(p.to_f64() + d);
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::default());
    }

    pub fn cast<U: Element>(&self) -> Parameter<U> {
        Parameter {
            name: self.name.clone(),
            value: self.value.cast(),
            grad: self.grad.iter().map(|v| U::from_f64(v.to_f64())).collect(),
            velocity: self.velocity.iter().map(|v| U::from_f64(v.to_f64())).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgdConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !(0.0..1.0).contains(&self.momentum) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config(format!(
                "SGD needs lr > 0, 0 <= momentum < 1, weight_decay >= 0: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Momentum SGD: `v = momentum * v + grad + weight_decay * p; p -= lr * v`,
/// then gradients are zeroed. Nothing is updated if any gradient is
/// non-finite.
pub fn sgd_step<T: Element>(params: &mut [Parameter<T>], cfg: &SgdConfig) -> Result<()> {
    cfg.validate()?;
    for p in params.iter() {
        if p.grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NumericFault(format!("non-finite gradient in {}", p.name)));
        }
    }
    for p in params.iter_mut() {
        for i in 0..p.grad.len() {
            let value = p.value.data[i].to_f64();
            let v = cfg.momentum * p.velocity[i].to_f64() + p.grad[i].to_f64() + cfg.weight_decay * value;
            p.velocity[i] = T::from_f64(v);
            p.value.data[i] = T::from_f64(value - cfg.lr * v);
        }
        p.zero_grad();
    }
    Ok(())
}

/// Input distribution for [`finite_diff_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InputDist {
    /// Uniform in `[-1, 1]`.
    Uniform,
    /// Uniform magnitude in `[0.1, 1]` with random sign; keeps inputs away
    /// from kinks at zero.
    AwayFromZero,
}

/// Maximum relative error between analytic and central-difference gradients.
///
/// Random `f64` inputs of the given shapes are fed to `op`; the objective is
/// a fixed random projection of its output. At least 50 input coordinates
/// (or all of them, when fewer exist) are perturbed by `±h`.
pub fn finite_diff_check<F>(op: F, input_shapes: &[Vec<usize>], h: f64, seed: u64) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    finite_diff_check_with(op, input_shapes, h, seed, InputDist::Uniform)
}

pub fn finite_diff_check_with<F>(
    op: F,
    input_shapes: &[Vec<usize>],
    h: f64,
    seed: u64,
    dist: InputDist,
) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    if !(1e-5..=1e-2).contains(&h) {
        return Err(Error::Config(format!("finite-difference step {h} outside [1e-5, 1e-2]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs: Vec<Tensor<f64>> = input_shapes
        .iter()
        .map(|shape| {
            let n = shape.iter().product();
            let data = (0..n)
                .map(|_| match dist {
                    InputDist::Uniform => rng.random_range(-1.0..1.0),
                    InputDist::AwayFromZero => {
                        let m: f64 = rng.random_range(0.1..1.0);
                        if rng.random_bool(0.5) { m } else { -m }
                    }
                })
                .collect();
            Tensor { shape: shape.clone(), data }
        })
        .collect();

    let evaluate = |inputs: &[Tensor<f64>]| -> Result<(Tape<f64>, Vec<Var>, Var)> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = op(&mut tape, &vars)?;
        Ok((tape, vars, out))
    };

    let (tape, vars, out) = evaluate(&inputs)?;
    let out_shape = tape.value(out).shape().to_vec();
    let projection: Vec<f64> = (0..tape.value(out).len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let objective = |t: &Tensor<f64>| -> f64 { t.data.iter().zip(&projection).map(|(a, b)| a * b).sum() };
    let grads = tape.backward(out, &Tensor::new(out_shape, projection.clone())?)?;

    let coords: Vec<(usize, usize)> = inputs
        .iter()
        .enumerate()
        .flat_map(|(k, t)| (0..t.len()).map(move |i| (k, i)))
        .collect();
    let picked: Vec<(usize, usize)> = if coords.len() <= 64 {
        coords
    } else {
        rand::seq::index::sample(&mut rng, coords.len(), 64)
            .into_iter()
            .map(|i| coords[i])
            .collect()
    };

    let mut worst = 0.0f64;
    for (k, i) in picked {
        let analytic = grads.get(vars[k]).map_or(0.0, |g| g[i]);
        let mut shifted = inputs.clone();
        shifted[k].data[i] += h;
        let (t_plus, _, o_plus) = evaluate(&shifted)?;
        shifted[k].data[i] -= 2.0 * h;
        let (t_minus, _, o_minus) = evaluate(&shifted)?;
        let numeric = (objective(t_plus.value(o_plus)) - objective(t_minus.value(o_minus))) / (2.0 * h);
        let scale = analytic.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((analytic - numeric).abs() / scale);
    }
    Ok(worst)
}
