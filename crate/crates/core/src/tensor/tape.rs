use std::collections::HashMap;

use rand::Rng;

use super::kernels::{self, ConvGeom};
use super::{Mode, ParamStore, Tensor};
use crate::error::{Error, Result};

pub const BN_EPSILON: f32 = 1e-5;
pub const BN_MOMENTUM: f32 = 0.9;
pub const BCE_CLAMP: f64 = 1e-7;

// Largest f32 strictly below one.
const SIGMOID_CEIL: f32 = 1.0 - f32::EPSILON / 2.0;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    Same,
    Valid,
}

/// Batchnorm running statistics. `None` until the first training-mode batch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunningStats {
    pub mean: Option<Vec<f32>>,
    pub var: Option<Vec<f32>>,
}

impl RunningStats {
    pub fn is_initialized(&self) -> bool {
        self.mean.is_some() && self.var.is_some()
    }

    fn update(&mut self, mean: &[f32], var: &[f32]) {
        match (&mut self.mean, &mut self.var) {
            (Some(m), Some(v)) => {
                for (r, &b) in m.iter_mut().zip(mean) {
                    *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * b;
                }
                for (r, &b) in v.iter_mut().zip(var) {
                    *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * b;
                }
            }
            _ => {
                self.mean = Some(mean.to_vec());
                self.var = Some(var.to_vec());
            }
        }
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv2d {
        x: Var,
        k: Var,
        b: Var,
        geom: ConvGeom,
    },
    MaxPool {
        x: Var,
        argmax: Vec<usize>,
    },
    Dense {
        x: Var,
        w: Var,
        b: Var,
    },
    Relu {
        x: Var,
    },
    Sigmoid {
        x: Var,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f32>,
        inv_std: Vec<f32>,
        batch_stats: bool,
    },
    Dropout {
        x: Var,
        mask: Vec<f32>,
    },
    AbsDiff {
        p: Var,
        q: Var,
    },
    SumRows {
        x: Var,
    },
    Sum {
        x: Var,
    },
    Reshape {
        x: Var,
    },
    Bce {
        pred: Var,
        target: Vec<f32>,
    },
    BceLogits {
        logits: Var,
        target: Vec<f32>,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Conv2d { .. } => "conv2d",
            Op::MaxPool { .. } => "maxpool2d",
            Op::Dense { .. } => "dense",
            Op::Relu { .. } => "relu",
            Op::Sigmoid { .. } => "sigmoid",
            Op::BatchNorm { .. } => "batchnorm",
            Op::Dropout { .. } => "dropout",
            Op::AbsDiff { .. } => "abs_diff",
            Op::SumRows { .. } => "sum_rows",
            Op::Sum { .. } => "sum",
            Op::Reshape { .. } => "reshape",
            Op::Bce { .. } => "bce_loss",
            Op::BceLogits { .. } => "bce_with_logits",
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Nodes visited by [`Tape::backward`], in visiting order.
#[derive(Debug, Clone, Default)]
pub struct BackwardReport {
    pub visited: Vec<Var>,
}

/// Ordered record of executed operations.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<String, Var>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every recorded node and saved value.
    pub fn clear(&mut self) {
        self.nodes.clear();
        self.params.clear();
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<&[f32]> {
        self.nodes[v.0].value.grad()
    }

    pub fn op_name(&self, v: Var) -> &'static str {
        self.nodes[v.0].op.name()
    }

    fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].value.requires_grad()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Result<Var> {
        if !value.all_finite() {
            return Err(Error::NonFinite(format!("{} forward", op.name())));
        }
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    fn push_derived(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Result<Var> {
        let rg = inputs.iter().any(|&v| self.requires_grad(v));
        self.push(value.with_requires_grad(rg), op)
    }

    /// Records an input tensor; it takes part in backward iff `requires_grad` is set.
    pub fn leaf(&mut self, t: Tensor) -> Result<Var> {
        self.push(t, Op::Leaf)
    }

    pub fn constant(&mut self, t: Tensor) -> Result<Var> {
        self.push(t.with_requires_grad(false), Op::Leaf)
    }

    /// Records a stored parameter once per tape; later calls return the same node,
    /// so every use of a shared parameter accumulates into one gradient.
    pub fn param(&mut self, store: &ParamStore, key: &str) -> Result<Var> {
        if let Some(&v) = self.params.get(key) {
            return Ok(v);
        }
        let p = store
            .get(key)
            .ok_or_else(|| Error::Contract(format!("unknown parameter `{key}`")))?;
        let t = Tensor::new(p.tensor.shape().to_vec(), p.tensor.data().to_vec())?
            .with_requires_grad(p.trainable);
        let v = self.leaf(t)?;
        self.params.insert(key.to_string(), v);
        Ok(v)
    }

    /// Gradients of every parameter recorded through [`Tape::param`].
    pub fn param_grads(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.params
            .iter()
            .filter_map(|(k, &v)| self.grad(v).map(|g| (k.as_str(), g)))
    }

    pub fn conv2d(&mut self, x: Var, k: Var, b: Var, stride: usize, padding: Padding) -> Result<Var> {
        const OP: &str = "conv2d";
        let xs = self.value(x).shape();
        let ks = self.value(k).shape();
        let bs = self.value(b).shape();
        if xs.len() != 4 {
            return Err(Error::dim(OP, format!("input must be [N,H,W,C], got {xs:?}")));
        }
        if ks.len() != 4 {
            return Err(Error::dim(OP, format!("kernel must be [kh,kw,C,F], got {ks:?}")));
        }
        if stride == 0 {
            return Err(Error::Config("conv2d stride must be at least 1".into()));
        }
        let (n, h, w, c) = (xs[0], xs[1], xs[2], xs[3]);
        let (kh, kw, kc, f) = (ks[0], ks[1], ks[2], ks[3]);
        if kc != c {
            return Err(Error::dim(
                OP,
                format!("axis C: input has {c} channels, kernel expects {kc}"),
            ));
        }
        if bs != [f] {
            return Err(Error::dim(
                OP,
                format!("axis F: bias shape {bs:?} but kernel has {f} filters"),
            ));
        }
        let (pad_top, pad_left, oh, ow) = match padding {
            Padding::Valid => {
                if kh > h || kw > w {
                    return Err(Error::dim(
                        OP,
                        format!("axes H,W: kernel {kh}x{kw} larger than input {h}x{w}"),
                    ));
                }
                (0, 0, (h - kh) / stride + 1, (w - kw) / stride + 1)
            }
            Padding::Same => {
                let oh = h.div_ceil(stride);
                let ow = w.div_ceil(stride);
                let ph = ((oh - 1) * stride + kh).saturating_sub(h);
                let pw = ((ow - 1) * stride + kw).saturating_sub(w);
                (ph / 2, pw / 2, oh, ow)
            }
        };
        let geom = ConvGeom {
            n,
            h,
            w,
            c,
            kh,
            kw,
            f,
            stride,
            pad_top,
            pad_left,
            oh,
            ow,
        };
        let out = kernels::conv2d_forward(
            &geom,
            self.value(x).data(),
            self.value(k).data(),
            self.value(b).data(),
        );
        let t = Tensor::new(vec![n, oh, ow, f], out)?;
        self.push_derived(t, Op::Conv2d { x, k, b, geom }, &[x, k, b])
    }

    /// 2×2 max pooling with stride 2.
    pub fn maxpool2d(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).shape().to_vec();
        if s.len() != 4 {
            return Err(Error::dim("maxpool2d", format!("input must be [N,H,W,C], got {s:?}")));
        }
        if s[1] < 2 || s[2] < 2 {
            return Err(Error::dim(
                "maxpool2d",
                format!("axes H,W: window 2x2 larger than input {}x{}", s[1], s[2]),
            ));
        }
        let (out, argmax) = kernels::maxpool_forward(self.value(x).data(), s[0], s[1], s[2], s[3]);
        let t = Tensor::new(vec![s[0], s[1] / 2, s[2] / 2, s[3]], out)?;
        self.push_derived(t, Op::MaxPool { x, argmax }, &[x])
    }

    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xs = self.value(x).shape();
        let ws = self.value(w).shape();
        let bs = self.value(b).shape();
        if xs.len() != 2 || ws.len() != 2 {
            return Err(Error::dim(
                "dense",
                format!("expected [N,D] input and [D,U] weight, got {xs:?} and {ws:?}"),
            ));
        }
        if xs[1] != ws[0] {
            return Err(Error::dim(
                "dense",
                format!("axis D: input has {} features, weight expects {}", xs[1], ws[0]),
            ));
        }
        if bs != [ws[1]] {
            return Err(Error::dim(
                "dense",
                format!("axis U: bias shape {bs:?} but weight has {} units", ws[1]),
            ));
        }
        let (n, d, u) = (xs[0], xs[1], ws[1]);
        let out = kernels::dense_forward(
            self.value(x).data(),
            self.value(w).data(),
            self.value(b).data(),
            n,
            d,
            u,
        );
        let t = Tensor::new(vec![n, u], out)?;
        self.push_derived(t, Op::Dense { x, w, b }, &[x, w, b])
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        let data = v.data().iter().map(|&a| a.max(0.0)).collect();
        let t = Tensor::new(v.shape().to_vec(), data)?;
        self.push_derived(t, Op::Relu { x }, &[x])
    }

    /// Logistic function; outputs stay strictly inside (0, 1) even when saturated.
    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        let data = v.data().iter().map(|&a| sigmoid_f32(a)).collect();
        let t = Tensor::new(v.shape().to_vec(), data)?;
        self.push_derived(t, Op::Sigmoid { x }, &[x])
    }

    /// Batch normalization over every axis except the last (channel) axis.
    pub fn batchnorm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mode: Mode,
        stats: &mut RunningStats,
        layer: &str,
    ) -> Result<Var> {
        let shape = self.value(x).shape().to_vec();
        let c = *shape.last().unwrap_or(&0);
        if shape.len() < 2 {
            return Err(Error::dim("batchnorm", format!("input must be [N,...,C], got {shape:?}")));
        }
        if self.value(gamma).shape() != [c] || self.value(beta).shape() != [c] {
            return Err(Error::dim(
                "batchnorm",
                format!("axis C: gamma/beta must have {c} entries"),
            ));
        }
        let xd = self.value(x).data();
        let (mean, var, batch_stats) = match mode {
            Mode::Train => {
                let (m, v) = kernels::channel_stats(xd, c);
                (m, v, true)
            }
            Mode::Infer => match (&stats.mean, &stats.var) {
                (Some(m), Some(v)) => (m.clone(), v.clone(), false),
                _ => return Err(Error::UninitializedStats(layer.to_string())),
            },
        };
        let inv_std: Vec<f32> = var.iter().map(|v| 1.0 / (v + BN_EPSILON).sqrt()).collect();
        let g = self.value(gamma).data();
        let bt = self.value(beta).data();
        let mut xhat = Vec::with_capacity(xd.len());
        let mut out = Vec::with_capacity(xd.len());
        for row in xd.chunks(c) {
            for ch in 0..c {
                let h = (row[ch] - mean[ch]) * inv_std[ch];
                xhat.push(h);
                out.push(g[ch] * h + bt[ch]);
            }
        }
        if batch_stats {
            stats.update(&mean, &var);
        }
        let t = Tensor::new(shape, out)?;
        self.push_derived(
            t,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            },
            &[x, gamma, beta],
        )
    }

    /// Inverted dropout. Inference mode (or rate 0) returns `x` unchanged.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, rate: f32, mode: Mode, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
        }
        if mode == Mode::Infer || rate == 0.0 {
            return Ok(x);
        }
        let scale = 1.0 / (1.0 - rate);
        let v = self.value(x);
        let mask: Vec<f32> = (0..v.len())
            .map(|_| if rng.gen::<f32>() < rate { 0.0 } else { scale })
            .collect();
        let data = v.data().iter().zip(&mask).map(|(a, m)| a * m).collect();
        let t = Tensor::new(v.shape().to_vec(), data)?;
        self.push_derived(t, Op::Dropout { x, mask }, &[x])
    }

    /// Elementwise `|p - q|`.
    pub fn abs_diff(&mut self, p: Var, q: Var) -> Result<Var> {
        let (ps, qs) = (self.value(p).shape(), self.value(q).shape());
        if ps != qs {
            return Err(Error::dim("l1_distance", format!("shapes {ps:?} and {qs:?} differ")));
        }
        let data = self
            .value(p)
            .data()
            .iter()
            .zip(self.value(q).data())
            .map(|(a, b)| (a - b).abs())
            .collect();
        let t = Tensor::new(ps.to_vec(), data)?;
        self.push_derived(t, Op::AbsDiff { p, q }, &[p, q])
    }

    /// Row sums of a `[N, D]` tensor, giving `[N, 1]`.
    pub fn sum_rows(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).shape();
        if s.len() != 2 {
            return Err(Error::dim("sum_rows", format!("expected [N,D], got {s:?}")));
        }
        let (n, d) = (s[0], s[1]);
        let data = self.value(x).data().chunks(d).map(|r| r.iter().sum()).collect();
        let t = Tensor::new(vec![n, 1], data)?;
        self.push_derived(t, Op::SumRows { x }, &[x])
    }

    /// L1 distance between rows: returns the elementwise `|p - q|` and its per-row sum.
    pub fn l1_distance(&mut self, p: Var, q: Var) -> Result<(Var, Var)> {
        let diff = self.abs_diff(p, q)?;
        let d1 = self.sum_rows(diff)?;
        Ok((diff, d1))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s: f64 = self.value(x).data().iter().map(|&v| v as f64).sum();
        self.push_derived(Tensor::scalar(s as f32), Op::Sum { x }, &[x])
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let t = self.value(x).reshape(shape)?;
        self.push_derived(t, Op::Reshape { x }, &[x])
    }

    /// Collapses all axes after the first.
    pub fn flatten(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).shape();
        let n = s[0];
        let d = s[1..].iter().product();
        self.reshape(x, vec![n, d])
    }

    /// Mean binary cross-entropy of probabilities `pred` against `{0,1}` targets.
    pub fn bce_loss(&mut self, pred: Var, target: &[f32]) -> Result<Var> {
        check_targets(self.value(pred).len(), target)?;
        let p = self.value(pred).data();
        let loss = p
            .iter()
            .zip(target)
            .map(|(&pv, &y)| bce_term(pv as f64, y as f64))
            .sum::<f64>()
            / p.len() as f64;
        self.push_derived(
            Tensor::scalar(loss as f32),
            Op::Bce {
                pred,
                target: target.to_vec(),
            },
            &[pred],
        )
    }

    /// Same loss value as `bce_loss(sigmoid(logits))`, with the gradient taken
    /// directly with respect to the logits (`σ(z) − y`), so saturated outputs
    /// still receive a learning signal.
    pub fn bce_with_logits(&mut self, logits: Var, target: &[f32]) -> Result<Var> {
        check_targets(self.value(logits).len(), target)?;
        let z = self.value(logits).data();
        let loss = z
            .iter()
            .zip(target)
            .map(|(&zv, &y)| bce_term(sigmoid_f32(zv) as f64, y as f64))
            .sum::<f64>()
            / z.len() as f64;
        self.push_derived(
            Tensor::scalar(loss as f32),
            Op::BceLogits {
                logits,
                target: target.to_vec(),
            },
            &[logits],
        )
    }

    /// Propagates `∂loss/∂·` to every node that requires a gradient.
    pub fn backward(&mut self, loss: Var) -> Result<BackwardReport> {
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        for node in &mut self.nodes {
            if node.value.requires_grad() {
                let n = node.value.len();
                *node.value.grad_mut() = Some(vec![0.0; n]);
            } else {
                *node.value.grad_mut() = None;
            }
        }
        let mut report = BackwardReport::default();
        if !self.requires_grad(loss) {
            return Ok(report);
        }
        *self.nodes[loss.0].value.grad_mut() = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].value.requires_grad() || matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            report.visited.push(Var(i));
            let g = self.nodes[i].value.grad_mut().take().unwrap_or_default();
            let contributions = self.op_backward(i, &g);
            *self.nodes[i].value.grad_mut() = Some(g);
            for (v, cg) in contributions {
                if let Some(acc) = self.nodes[v.0].value.grad_mut() {
                    for (a, c) in acc.iter_mut().zip(&cg) {
                        *a += c;
                    }
                }
            }
        }
        for node in &self.nodes {
            if let Some(g) = node.value.grad() {
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(format!("{} backward", node.op.name())));
                }
            }
        }
        Ok(report)
    }

    fn op_backward(&self, i: usize, g: &[f32]) -> Vec<(Var, Vec<f32>)> {
        let node = &self.nodes[i];
        let mut out = Vec::new();
        let mut emit = |v: Var, grad: Vec<f32>| out.push((v, grad));
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { x, k, b, geom } => {
                let (dx, dk, db) = kernels::conv2d_backward(
                    geom,
                    self.value(*x).data(),
                    self.value(*k).data(),
                    g,
                    self.requires_grad(*x),
                    self.requires_grad(*k),
                    self.requires_grad(*b),
                );
                if let Some(d) = dx {
                    emit(*x, d);
                }
                if let Some(d) = dk {
                    emit(*k, d);
                }
                if let Some(d) = db {
                    emit(*b, d);
                }
            }
            Op::MaxPool { x, argmax } => {
                if self.requires_grad(*x) {
                    let mut dx = vec![0.0; self.value(*x).len()];
                    for (&src, &gv) in argmax.iter().zip(g) {
                        dx[src] += gv;
                    }
                    emit(*x, dx);
                }
            }
            Op::Dense { x, w, b } => {
                let xs = self.value(*x);
                let wv = self.value(*w);
                let (n, d) = (xs.shape()[0], xs.shape()[1]);
                let u = wv.shape()[1];
                if self.requires_grad(*x) {
                    let mut dx = vec![0.0; n * d];
                    for (row, grow) in dx.chunks_mut(d).zip(g.chunks(u)) {
                        for (di, dv) in row.iter_mut().enumerate() {
                            *dv = kernels::dot(grow, &wv.data()[di * u..(di + 1) * u]);
                        }
                    }
                    emit(*x, dx);
                }
                if self.requires_grad(*w) {
                    let mut dw = vec![0.0; d * u];
                    for (xrow, grow) in xs.data().chunks(d).zip(g.chunks(u)) {
                        for (di, &a) in xrow.iter().enumerate() {
                            if a == 0.0 {
                                continue;
                            }
                            for (acc, &gv) in dw[di * u..(di + 1) * u].iter_mut().zip(grow) {
                                *acc += a * gv;
                            }
                        }
                    }
                    emit(*w, dw);
                }
                if self.requires_grad(*b) {
                    let mut db = vec![0.0; u];
                    for grow in g.chunks(u) {
                        for (acc, &gv) in db.iter_mut().zip(grow) {
                            *acc += gv;
                        }
                    }
                    emit(*b, db);
                }
            }
            Op::Relu { x } => {
                if self.requires_grad(*x) {
                    let dx = self
                        .value(*x)
                        .data()
                        .iter()
                        .zip(g)
                        .map(|(&a, &gv)| if a > 0.0 { gv } else { 0.0 })
                        .collect();
                    emit(*x, dx);
                }
            }
            Op::Sigmoid { x } => {
                if self.requires_grad(*x) {
                    let dx = node
                        .value
                        .data()
                        .iter()
                        .zip(g)
                        .map(|(&s, &gv)| gv * s * (1.0 - s))
                        .collect();
                    emit(*x, dx);
                }
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            } => {
                let c = inv_std.len();
                let gm = self.value(*gamma).data();
                let mut sum_dy = vec![0.0f64; c];
                let mut sum_dy_xhat = vec![0.0f64; c];
                for (grow, hrow) in g.chunks(c).zip(xhat.chunks(c)) {
                    for ch in 0..c {
                        sum_dy[ch] += grow[ch] as f64;
                        sum_dy_xhat[ch] += (grow[ch] * hrow[ch]) as f64;
                    }
                }
                if self.requires_grad(*x) {
                    let m = (g.len() / c) as f32;
                    let mut dx = Vec::with_capacity(g.len());
                    for (grow, hrow) in g.chunks(c).zip(xhat.chunks(c)) {
                        for ch in 0..c {
                            let v = if *batch_stats {
                                gm[ch] * inv_std[ch] / m
                                    * (m * grow[ch]
                                        - sum_dy[ch] as f32
                                        - hrow[ch] * sum_dy_xhat[ch] as f32)
                            } else {
                                gm[ch] * inv_std[ch] * grow[ch]
                            };
                            dx.push(v);
                        }
                    }
                    emit(*x, dx);
                }
                if self.requires_grad(*gamma) {
                    emit(*gamma, sum_dy_xhat.iter().map(|&v| v as f32).collect());
                }
                if self.requires_grad(*beta) {
                    emit(*beta, sum_dy.iter().map(|&v| v as f32).collect());
                }
            }
            Op::Dropout { x, mask } => {
                if self.requires_grad(*x) {
                    emit(*x, g.iter().zip(mask).map(|(a, m)| a * m).collect());
                }
            }
            Op::AbsDiff { p, q } => {
                let pd = self.value(*p).data();
                let qd = self.value(*q).data();
                let sign: Vec<f32> = pd
                    .iter()
                    .zip(qd)
                    .zip(g)
                    .map(|((&a, &b), &gv)| {
                        if a > b {
                            gv
                        } else if a < b {
                            -gv
                        } else {
                            0.0
                        }
                    })
                    .collect();
                if self.requires_grad(*q) {
                    emit(*q, sign.iter().map(|v| -v).collect());
                }
                if self.requires_grad(*p) {
                    emit(*p, sign);
                }
            }
            Op::SumRows { x } => {
                if self.requires_grad(*x) {
                    let d = self.value(*x).shape()[1];
                    let dx = g.iter().flat_map(|&gv| std::iter::repeat_n(gv, d)).collect();
                    emit(*x, dx);
                }
            }
            Op::Sum { x } => {
                if self.requires_grad(*x) {
                    emit(*x, vec![g[0]; self.value(*x).len()]);
                }
            }
            Op::Reshape { x } => {
                if self.requires_grad(*x) {
                    emit(*x, g.to_vec());
                }
            }
            Op::Bce { pred, target } => {
                if self.requires_grad(*pred) {
                    let n = target.len() as f64;
                    let dp = self
                        .value(*pred)
                        .data()
                        .iter()
                        .zip(target)
                        .map(|(&p, &y)| {
                            let p = p as f64;
                            if p <= BCE_CLAMP || p >= 1.0 - BCE_CLAMP {
                                0.0
                            } else {
                                (g[0] as f64 * (p - y as f64) / (p * (1.0 - p)) / n) as f32
                            }
                        })
                        .collect();
                    emit(*pred, dp);
                }
            }
            Op::BceLogits { logits, target } => {
                if self.requires_grad(*logits) {
                    let n = target.len() as f32;
                    let dz = self
                        .value(*logits)
                        .data()
                        .iter()
                        .zip(target)
                        .map(|(&z, &y)| g[0] * (sigmoid_f32(z) - y) / n)
                        .collect();
                    emit(*logits, dz);
                }
            }
        }
        out
    }
}

fn check_targets(n: usize, target: &[f32]) -> Result<()> {
    if target.len() != n {
        return Err(Error::dim(
            "bce_loss",
            format!("{n} predictions but {} targets", target.len()),
        ));
    }
    if let Some(bad) = target.iter().find(|&&y| y != 0.0 && y != 1.0) {
        return Err(Error::Label(format!("target {bad} is not 0 or 1")));
    }
    Ok(())
}

fn bce_term(p: f64, y: f64) -> f64 {
    let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

pub(crate) fn sigmoid_f32(x: f32) -> f32 {
    let s = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    s.clamp(f32::MIN_POSITIVE, SIGMOID_CEIL)
}
