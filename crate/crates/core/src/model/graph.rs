use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{BackboneConfig, HeadMode, LayerKind, LayerSpec};
use crate::error::{Error, Result};
use crate::seed::{self, Stream};
use crate::tensor::{Mode, Padding, Param, ParamKind, ParamStore, RunningStats, Tape, Tensor, Var};

pub const SUPPORTED_INPUT_SIZES: [usize; 3] = [64, 128, 256];

/// Baseline classifier: backbone → dense feature layer → one sigmoid unit, P(correct).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnConfig {
    pub backbone: BackboneConfig,
    pub feature_units: usize,
    pub feature_dropout: f32,
    pub init_seed: u64,
}

impl Default for CnnConfig {
    fn default() -> Self {
        Self {
            backbone: BackboneConfig::vgg16(),
            feature_units: 128,
            feature_dropout: 0.3,
            init_seed: 0,
        }
    }
}

impl CnnConfig {
    /// Head used on top of an imported backbone: 128 units, 50% dropout.
    pub fn transfer() -> Self {
        Self {
            feature_dropout: 0.5,
            ..Self::default()
        }
    }
}

/// Twin towers with shared weights, an L1 distance head and a sigmoid similarity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnnConfig {
    pub backbone: BackboneConfig,
    pub feature_units: usize,
    pub feature_dropout: f32,
    pub head: HeadMode,
    pub init_seed: u64,
}

impl Default for SnnConfig {
    fn default() -> Self {
        Self {
            backbone: BackboneConfig::vgg16(),
            feature_units: 128,
            feature_dropout: 0.3,
            head: HeadMode::ScalarL1,
            init_seed: 0,
        }
    }
}

impl SnnConfig {
    /// Tower feature layers used with an imported backbone: 1024 units, 30% dropout.
    pub fn transfer() -> Self {
        Self {
            feature_units: 1024,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "architecture", rename_all = "kebab-case")]
pub enum ModelSpec {
    Classifier(CnnConfig),
    Siamese(SnnConfig),
}

impl ModelSpec {
    pub fn backbone(&self) -> &BackboneConfig {
        match self {
            ModelSpec::Classifier(c) => &c.backbone,
            ModelSpec::Siamese(c) => &c.backbone,
        }
    }
}

/// Per-call forward state: mode, dropout randomness, and batchnorm statistics
/// produced during the call (committed to the graph with [`ModelGraph::commit`]).
#[derive(Debug)]
pub struct ForwardCtx {
    mode: Mode,
    rng: ChaCha8Rng,
    pending: BTreeMap<String, RunningStats>,
    calibration: Option<BTreeMap<String, MomentSums>>,
}

/// Row-weighted first and second moments gathered by a calibration pass.
#[derive(Debug, Clone, Default)]
struct MomentSums {
    rows: f64,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl ForwardCtx {
    pub fn train(rng: ChaCha8Rng) -> Self {
        Self {
            mode: Mode::Train,
            rng,
            pending: BTreeMap::new(),
            calibration: None,
        }
    }

    pub fn train_seeded(seed: u64) -> Self {
        Self::train(seed::rng(Stream::Dropout, seed, 0, 0))
    }

    pub fn infer() -> Self {
        Self {
            mode: Mode::Infer,
            rng: seed::rng(Stream::Dropout, 0, 0, 0),
            pending: BTreeMap::new(),
            calibration: None,
        }
    }

    /// Dropout off, batchnorm on batch statistics; the population mean and
    /// variance seen by every batchnorm layer are accumulated instead of
    /// updating running statistics. See [`ModelGraph::recalibrate_batchnorm`].
    pub fn calibrate() -> Self {
        Self {
            calibration: Some(BTreeMap::new()),
            ..Self::infer()
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }
}

/// A layered network with its parameters and batchnorm running statistics.
///
/// A Siamese graph has a single tower; both inputs run through it, so the twin
/// weights are the same storage by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGraph {
    spec: ModelSpec,
    input_shape: [usize; 3],
    tower: Vec<LayerSpec>,
    head: Vec<LayerSpec>,
    params: ParamStore,
    running: BTreeMap<String, RunningStats>,
    feature_width: usize,
}

pub fn build_baseline_cnn(input_shape: [usize; 3], config: &CnnConfig) -> Result<ModelGraph> {
    ModelGraph::build(ModelSpec::Classifier(config.clone()), input_shape)
}

pub fn build_snn(input_shape: [usize; 3], config: &SnnConfig) -> Result<ModelGraph> {
    ModelGraph::build(ModelSpec::Siamese(config.clone()), input_shape)
}

fn backbone_layers(cfg: &BackboneConfig) -> Vec<LayerSpec> {
    let mut layers = Vec::new();
    for (bi, block) in cfg.blocks.iter().enumerate() {
        let b = bi + 1;
        for ci in 1..=block.convs {
            layers.push(
                LayerSpec::new(
                    format!("block{b}_conv{ci}"),
                    LayerKind::Conv {
                        filters: block.filters,
                        kernel: 3,
                    },
                )
                .in_block(b),
            );
            layers.push(LayerSpec::new(format!("block{b}_bn{ci}"), LayerKind::BatchNorm).in_block(b));
            layers.push(LayerSpec::new(format!("block{b}_relu{ci}"), LayerKind::Relu).in_block(b));
            layers.push(
                LayerSpec::new(
                    format!("block{b}_drop{ci}"),
                    LayerKind::Dropout {
                        rate: cfg.conv_dropout,
                    },
                )
                .in_block(b),
            );
        }
        layers.push(LayerSpec::new(format!("block{b}_pool"), LayerKind::MaxPool).in_block(b));
    }
    layers.push(LayerSpec::new("flatten", LayerKind::Flatten));
    layers
}

fn glorot(rng: &mut ChaCha8Rng, n: usize, fan_in: usize, fan_out: usize) -> Vec<f32> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt() as f32;
    (0..n).map(|_| rng.gen_range(-limit..=limit)).collect()
}

fn check_rate(rate: f32, what: &str) -> Result<()> {
    if (0.0..1.0).contains(&rate) {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} dropout rate {rate} outside [0, 1)")))
    }
}

impl ModelGraph {
    pub fn build(spec: ModelSpec, input_shape: [usize; 3]) -> Result<Self> {
        let [h, w, c] = input_shape;
        if h != w || c != 3 || !SUPPORTED_INPUT_SIZES.contains(&h) {
            return Err(Error::Config(format!(
                "unsupported input shape ({h}, {w}, {c}); expected (S, S, 3) with S in {SUPPORTED_INPUT_SIZES:?}"
            )));
        }
        let backbone = spec.backbone();
        if backbone.blocks.is_empty() || backbone.blocks.iter().any(|b| b.filters == 0 || b.convs == 0) {
            return Err(Error::Config("backbone needs at least one non-empty block".into()));
        }
        check_rate(backbone.conv_dropout, "convolution")?;
        let mut tower = backbone_layers(backbone);
        let mut head = Vec::new();
        let (units, dropout, init_seed) = match &spec {
            ModelSpec::Classifier(c) => (c.feature_units, c.feature_dropout, c.init_seed),
            ModelSpec::Siamese(c) => (c.feature_units, c.feature_dropout, c.init_seed),
        };
        if units == 0 {
            return Err(Error::Config("feature layer needs at least one unit".into()));
        }
        check_rate(dropout, "feature")?;
        tower.push(LayerSpec::new("features", LayerKind::Dense { units }));
        tower.push(LayerSpec::new("features_relu", LayerKind::Relu));
        tower.push(LayerSpec::new("features_drop", LayerKind::Dropout { rate: dropout }));
        match &spec {
            ModelSpec::Classifier(_) => {
                head.push(LayerSpec::new("output", LayerKind::Dense { units: 1 }));
                head.push(LayerSpec::new("output_sigmoid", LayerKind::Sigmoid));
            }
            ModelSpec::Siamese(c) => {
                head.push(LayerSpec::new("l1_head", LayerKind::L1Head { mode: c.head }));
                head.push(LayerSpec::new("similarity", LayerKind::Sigmoid));
            }
        }

        let mut graph = Self {
            spec,
            input_shape,
            tower,
            head,
            params: ParamStore::new(),
            running: BTreeMap::new(),
            feature_width: units,
        };
        graph.init_params(init_seed)?;
        Ok(graph)
    }

    fn init_params(&mut self, seed: u64) -> Result<()> {
        let mut rng = seed::rng(Stream::Init, seed, 0, 0);
        let mut shape: Vec<usize> = self.input_shape.to_vec();
        let mut params = Vec::new();
        let layers: Vec<LayerSpec> = self.tower.iter().chain(&self.head).cloned().collect();
        for layer in &layers {
            let id = layer.id.as_str();
            let mut push = |name: &str, kind: ParamKind, t: Tensor| {
                params.push(Param {
                    layer: id.to_string(),
                    name: name.to_string(),
                    kind,
                    tensor: t,
                    trainable: layer.trainable,
                })
            };
            match &layer.kind {
                LayerKind::Conv { filters, kernel } => {
                    let cin = shape[2];
                    let k = glorot(&mut rng, kernel * kernel * cin * filters, kernel * kernel * cin, kernel * kernel * filters);
                    push("kernel", ParamKind::Conv, Tensor::new(vec![*kernel, *kernel, cin, *filters], k)?);
                    push("bias", ParamKind::Conv, Tensor::zeros(vec![*filters]));
                    shape[2] = *filters;
                }
                LayerKind::BatchNorm => {
                    let ch = *shape.last().unwrap();
                    push("gamma", ParamKind::BatchNorm, Tensor::full(vec![ch], 1.0));
                    push("beta", ParamKind::BatchNorm, Tensor::zeros(vec![ch]));
                    self.running.insert(layer.id.clone(), RunningStats::default());
                }
                LayerKind::MaxPool => {
                    if shape[0] < 2 || shape[1] < 2 {
                        return Err(Error::Config(format!(
                            "layer `{}`: spatial size {}x{} too small to pool",
                            layer.id, shape[0], shape[1]
                        )));
                    }
                    shape = vec![shape[0] / 2, shape[1] / 2, shape[2]];
                }
                LayerKind::Flatten => shape = vec![shape.iter().product()],
                LayerKind::Dense { units } => {
                    if shape.len() != 1 {
                        return Err(Error::Config(format!("layer `{}` needs a flat input", layer.id)));
                    }
                    let d = shape[0];
                    let kind = ParamKind::Dense;
                    push("weight", kind, Tensor::new(vec![d, *units], glorot(&mut rng, d * units, d, *units))?);
                    push("bias", kind, Tensor::zeros(vec![*units]));
                    shape = vec![*units];
                }
                LayerKind::L1Head { mode } => match mode {
                    HeadMode::ScalarL1 => {
                        push("weight", ParamKind::L1Head, Tensor::full(vec![1, 1], -1.0));
                        push("bias", ParamKind::L1Head, Tensor::zeros(vec![1]));
                        shape = vec![1];
                    }
                    HeadMode::WeightedL1 => {
                        let d = shape[0];
                        push("weight", ParamKind::L1Head, Tensor::new(vec![d, 1], glorot(&mut rng, d, d, 1))?);
                        push("bias", ParamKind::L1Head, Tensor::zeros(vec![1]));
                        shape = vec![1];
                    }
                },
                LayerKind::Relu | LayerKind::Dropout { .. } | LayerKind::Sigmoid => {}
            }
        }
        for p in params {
            self.params.insert(p)?;
        }
        Ok(())
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    pub fn is_siamese(&self) -> bool {
        matches!(self.spec, ModelSpec::Siamese(_))
    }

    pub fn feature_width(&self) -> usize {
        self.feature_width
    }

    /// Tower layers followed by head layers.
    pub fn layers(&self) -> impl Iterator<Item = &LayerSpec> {
        self.tower.iter().chain(&self.head)
    }

    pub fn layer(&self, id: &str) -> Option<&LayerSpec> {
        self.layers().find(|l| l.id == id)
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn running_stats(&self) -> &BTreeMap<String, RunningStats> {
        &self.running
    }

    pub fn running_stats_mut(&mut self) -> &mut BTreeMap<String, RunningStats> {
        &mut self.running
    }

    pub fn param_count(&self) -> usize {
        self.params.count()
    }

    pub fn trainable_param_count(&self) -> usize {
        self.params.trainable_count()
    }

    pub fn num_blocks(&self) -> usize {
        self.spec.backbone().blocks.len()
    }

    /// Sets the trainable flag of a layer and every parameter it owns.
    pub fn set_layer_trainable(&mut self, id: &str, trainable: bool) -> Result<()> {
        let layer = self
            .tower
            .iter_mut()
            .chain(self.head.iter_mut())
            .find(|l| l.id == id)
            .ok_or_else(|| Error::Contract(format!("no layer `{id}`")))?;
        layer.trainable = trainable;
        for p in self.params.iter_mut().filter(|p| p.layer == id) {
            p.trainable = trainable;
        }
        Ok(())
    }

    /// Applies batchnorm statistics gathered during a training-mode forward pass.
    pub fn commit(&mut self, ctx: ForwardCtx) {
        if ctx.mode == Mode::Train {
            self.running.extend(ctx.pending);
        }
    }

    /// Replaces every batchnorm layer's running statistics with the population
    /// mean and variance of its inputs over `images`, computed with dropout off.
    ///
    /// Inverted dropout before a batchnorm layer inflates the variance it sees
    /// during training, so running statistics collected with dropout on
    /// under-scale activations at inference; this pass removes that mismatch.
    pub fn recalibrate_batchnorm(&mut self, images: &[&Tensor]) -> Result<()> {
        let mut ctx = ForwardCtx::calibrate();
        for batch in images {
            self.check_batch(batch)?;
            let mut tape = Tape::new();
            let x = tape.constant((*batch).clone())?;
            self.run(&self.tower, &mut tape, x, &mut ctx)?;
        }
        for (id, acc) in ctx.calibration.unwrap_or_default() {
            if acc.rows == 0.0 {
                continue;
            }
            let mean: Vec<f64> = acc.sum.iter().map(|s| s / acc.rows).collect();
            let var = acc
                .sum_sq
                .iter()
                .zip(&mean)
                .map(|(sq, m)| ((sq / acc.rows - m * m).max(0.0)) as f32)
                .collect();
            self.running.insert(
                id,
                RunningStats {
                    mean: Some(mean.iter().map(|&m| m as f32).collect()),
                    var: Some(var),
                },
            );
        }
        Ok(())
    }

    pub fn check_batch(&self, batch: &Tensor) -> Result<()> {
        let s = batch.shape();
        let [h, w, c] = self.input_shape;
        if s.len() != 4 || s[1] != h || s[2] != w || s[3] != c {
            return Err(Error::dim(
                "model input",
                format!("batch shape {s:?} does not match [N, {h}, {w}, {c}]"),
            ));
        }
        Ok(())
    }

    fn run(&self, layers: &[LayerSpec], tape: &mut Tape, mut x: Var, ctx: &mut ForwardCtx) -> Result<Var> {
        for layer in layers {
            let id = layer.id.as_str();
            let key = |name: &str| format!("{id}.{name}");
            x = match &layer.kind {
                LayerKind::Conv { .. } => {
                    let k = tape.param(&self.params, &key("kernel"))?;
                    let b = tape.param(&self.params, &key("bias"))?;
                    tape.conv2d(x, k, b, 1, Padding::Same)?
                }
                LayerKind::BatchNorm => {
                    let g = tape.param(&self.params, &key("gamma"))?;
                    let b = tape.param(&self.params, &key("beta"))?;
                    if let Some(sums) = ctx.calibration.as_mut() {
                        let mut batch = RunningStats::default();
                        let y = tape.batchnorm(x, g, b, Mode::Train, &mut batch, id)?;
                        let rows = (tape.value(x).len() / batch.mean.as_ref().map_or(1, Vec::len)) as f64;
                        let acc = sums.entry(layer.id.clone()).or_default();
                        let (m, v) = (batch.mean.unwrap_or_default(), batch.var.unwrap_or_default());
                        acc.sum.resize(m.len(), 0.0);
                        acc.sum_sq.resize(m.len(), 0.0);
                        acc.rows += rows;
                        for ch in 0..m.len() {
                            let (m, v) = (m[ch] as f64, v[ch] as f64);
                            acc.sum[ch] += rows * m;
                            acc.sum_sq[ch] += rows * (v + m * m);
                        }
                        y
                    } else {
                        let stats = ctx
                            .pending
                            .entry(layer.id.clone())
                            .or_insert_with(|| self.running.get(id).cloned().unwrap_or_default());
                        tape.batchnorm(x, g, b, ctx.mode, stats, id)?
                    }
                }
                LayerKind::Relu => tape.relu(x)?,
                LayerKind::MaxPool => tape.maxpool2d(x)?,
                LayerKind::Dropout { rate } => tape.dropout(x, *rate, ctx.mode, &mut ctx.rng)?,
                LayerKind::Dense { .. } => {
                    let w = tape.param(&self.params, &key("weight"))?;
                    let b = tape.param(&self.params, &key("bias"))?;
                    tape.dense(x, w, b)?
                }
                LayerKind::Flatten => tape.flatten(x)?,
                LayerKind::Sigmoid => tape.sigmoid(x)?,
                LayerKind::L1Head { .. } => {
                    return Err(Error::Contract(format!("layer `{id}` needs two inputs")))
                }
            };
        }
        Ok(x)
    }

    fn require(&self, siamese: bool) -> Result<()> {
        if self.is_siamese() != siamese {
            let want = if siamese { "Siamese" } else { "classifier" };
            return Err(Error::Contract(format!("operation needs a {want} graph")));
        }
        Ok(())
    }

    /// Classifier pre-sigmoid output `[N, 1]`.
    pub fn classifier_logits(&self, tape: &mut Tape, x: Var, ctx: &mut ForwardCtx) -> Result<Var> {
        self.require(false)?;
        let f = self.run(&self.tower, tape, x, ctx)?;
        self.run(&self.head[..self.head.len() - 1], tape, f, ctx)
    }

    /// Feature vectors `[N, D]` from the shared tower.
    pub fn embed(&self, tape: &mut Tape, x: Var, ctx: &mut ForwardCtx) -> Result<Var> {
        self.require(true)?;
        self.run(&self.tower, tape, x, ctx)
    }

    /// Similarity logits `[N, 1]` from two feature batches.
    pub fn head_logits(&self, tape: &mut Tape, p: Var, q: Var) -> Result<Var> {
        self.require(true)?;
        let head = &self.head[0];
        let LayerKind::L1Head { mode } = head.kind else {
            return Err(Error::Contract("Siamese head is missing".into()));
        };
        let (diff, d1) = tape.l1_distance(p, q)?;
        let w = tape.param(&self.params, &format!("{}.weight", head.id))?;
        let b = tape.param(&self.params, &format!("{}.bias", head.id))?;
        match mode {
            HeadMode::ScalarL1 => tape.dense(d1, w, b),
            HeadMode::WeightedL1 => tape.dense(diff, w, b),
        }
    }

    pub fn snn_logits(&self, tape: &mut Tape, a: Var, b: Var, ctx: &mut ForwardCtx) -> Result<Var> {
        let p = self.embed(tape, a, ctx)?;
        let q = self.embed(tape, b, ctx)?;
        self.head_logits(tape, p, q)
    }

    /// Scores `P(correctly installed)` for each image in the batch.
    pub fn forward_classifier(&self, batch: &Tensor, ctx: &mut ForwardCtx) -> Result<Vec<f32>> {
        self.check_batch(batch)?;
        let mut tape = Tape::new();
        let x = tape.constant(batch.clone())?;
        let z = self.classifier_logits(&mut tape, x, ctx)?;
        let s = tape.sigmoid(z)?;
        Ok(tape.value(s).data().to_vec())
    }

    /// Similarity of each `(a[i], b[i])` pair.
    pub fn forward_snn(&self, a: &Tensor, b: &Tensor, ctx: &mut ForwardCtx) -> Result<Vec<f32>> {
        self.check_batch(a)?;
        self.check_batch(b)?;
        if a.shape()[0] != b.shape()[0] {
            return Err(Error::dim(
                "forward_snn",
                format!("batch sizes {} and {} differ", a.shape()[0], b.shape()[0]),
            ));
        }
        let mut tape = Tape::new();
        let xa = tape.constant(a.clone())?;
        let xb = tape.constant(b.clone())?;
        let z = self.snn_logits(&mut tape, xa, xb, ctx)?;
        let s = tape.sigmoid(z)?;
        Ok(tape.value(s).data().to_vec())
    }

    /// Inference-mode tower output `[N, D]`.
    pub fn embed_batch(&self, batch: &Tensor) -> Result<Tensor> {
        self.check_batch(batch)?;
        let mut tape = Tape::new();
        let x = tape.constant(batch.clone())?;
        let f = self.embed(&mut tape, x, &mut ForwardCtx::infer())?;
        Ok(tape.value(f).clone())
    }

    /// Head similarity for precomputed feature rows `p[i]`, `q[i]`.
    pub fn similarity_from_features(&self, p: &Tensor, q: &Tensor) -> Result<Vec<f32>> {
        let mut tape = Tape::new();
        let pv = tape.constant(p.clone())?;
        let qv = tape.constant(q.clone())?;
        let z = self.head_logits(&mut tape, pv, qv)?;
        let s = tape.sigmoid(z)?;
        Ok(tape.value(s).data().to_vec())
    }
}

/// One tower output row tagged with the image it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f32>,
    pub source_id: String,
}

impl FeatureVector {
    /// Splits a `[N, D]` tower output into one vector per id.
    pub fn from_rows(rows: &Tensor, ids: &[String]) -> Result<Vec<Self>> {
        let s = rows.shape();
        if s.len() != 2 || s[0] != ids.len() {
            return Err(Error::dim(
                "feature vectors",
                format!("{} ids for a {s:?} feature batch", ids.len()),
            ));
        }
        if !rows.all_finite() {
            return Err(Error::NonFinite("feature vector".into()));
        }
        Ok(rows
            .data()
            .chunks(s[1])
            .zip(ids)
            .map(|(v, id)| Self {
                values: v.to_vec(),
                source_id: id.clone(),
            })
            .collect())
    }
}
