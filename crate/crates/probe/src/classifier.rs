//! The statement-correctness probe.
//!
//! Input: the activations of a statement's last five tokens, `[position][channel]`
//! with channels = selected layers × hidden dim (layer-major). Network:
//!
//! ```text
//! conv1d(in → 128, kernel 3, stride 1, no padding) over 5 positions → 3 × 128, ReLU
//! flatten (channel-major: c·3 + t) → dense 384 → 256, ReLU → 256 → 128, ReLU → 128 → 1 → sigmoid
//! ```
//!
//! The output is P(Correct). Training minimizes binary cross-entropy with
//! Adam over seeded mini-batches and keeps the epoch with the best
//! validation accuracy. All arithmetic is `f64`; checkpoints store `f32`.

use std::io::{Read, Write};

use apz_core::parser::{Label, LabeledStatement};
use apz_core::rng::{derive_seed, rng};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ProbeError, Result};
use crate::store::Activations;

/// Token positions fed to the probe.
pub const POSITIONS: usize = 5;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub in_channels: usize,
    pub conv_channels: usize,
    pub kernel: usize,
    pub hidden: [usize; 2],
}

impl Architecture {
    pub fn standard(in_channels: usize) -> Self {
        Architecture { in_channels, conv_channels: 128, kernel: 3, hidden: [256, 128] }
    }

    pub fn conv_len(&self) -> usize {
        POSITIONS + 1 - self.kernel
    }

    pub fn flat(&self) -> usize {
        self.conv_channels * self.conv_len()
    }

    pub fn param_count(&self) -> usize {
        let [h1, h2] = self.hidden;
        self.conv_channels * self.in_channels * self.kernel
            + self.conv_channels
            + self.flat() * h1
            + h1
            + h1 * h2
            + h2
            + h2
            + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.conv_channels == 0 || self.hidden.contains(&0) {
            return Err(ProbeError::Config(format!("degenerate architecture {self:?}")));
        }
        if self.kernel == 0 || self.kernel > POSITIONS {
            return Err(ProbeError::Config(format!("kernel {} does not fit {POSITIONS} positions", self.kernel)));
        }
        Ok(())
    }

    fn layout(&self) -> Layout {
        let [h1, h2] = self.hidden;
        let mut at = 0;
        let mut take = |len: usize| {
            let r = at..at + len;
            at += len;
            r
        };
        let l = Layout {
            conv_w: take(self.conv_channels * self.in_channels * self.kernel),
            conv_b: take(self.conv_channels),
            w1: take(self.flat() * h1),
            b1: take(h1),
            w2: take(h1 * h2),
            b2: take(h2),
            w3: take(h2),
            b3: take(1),
        };
        debug_assert_eq!(at, self.param_count());
        l
    }
}

/// Offsets of each tensor in the flat parameter vector, in storage order.
#[derive(Clone, Debug)]
struct Layout {
    conv_w: std::ops::Range<usize>,
    conv_b: std::ops::Range<usize>,
    w1: std::ops::Range<usize>,
    b1: std::ops::Range<usize>,
    w2: std::ops::Range<usize>,
    b2: std::ops::Range<usize>,
    w3: std::ops::Range<usize>,
    b3: std::ops::Range<usize>,
}

/// Per-channel affine normalization learned from the training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(examples: &[ProbeExample]) -> Self {
        let c = examples[0].channels;
        let mut mean = vec![0.0; c];
        let mut sq = vec![0.0; c];
        let count = (examples.len() * POSITIONS) as f64;
        for e in examples {
            for p in 0..POSITIONS {
                for (k, &v) in e.features[p * c..(p + 1) * c].iter().enumerate() {
                    mean[k] += v as f64;
                }
            }
        }
        mean.iter_mut().for_each(|m| *m /= count);
        for e in examples {
            for p in 0..POSITIONS {
                for (k, &v) in e.features[p * c..(p + 1) * c].iter().enumerate() {
                    let d = v as f64 - mean[k];
                    sq[k] += d * d;
                }
            }
        }
        let std = sq.iter().map(|s| (s / count).sqrt()).map(|s| if s > 1e-12 { s } else { 1.0 }).collect();
        Standardizer { mean, std }
    }

    fn apply(&self, features: &[f32], out: &mut Vec<f64>) {
        let c = self.mean.len();
        out.clear();
        out.extend(features.iter().enumerate().map(|(i, &v)| (v as f64 - self.mean[i % c]) / self.std[i % c]));
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeExample {
    pub puzzle_id: String,
    pub statement_index: usize,
    pub label: Label,
    pub channels: usize,
    /// `[position][channel]`, `POSITIONS × channels`.
    pub features: Vec<f32>,
}

impl ProbeExample {
    fn target(&self) -> f64 {
        if self.label == Label::Correct {
            1.0
        } else {
            0.0
        }
    }
}

/// Statements of one puzzle alongside its activations.
pub struct ExampleSource<'a> {
    pub puzzle_id: &'a str,
    pub activations: &'a Activations,
    pub statements: &'a [LabeledStatement],
}

#[derive(Clone, Debug, Default)]
pub struct BuildReport {
    pub examples: Vec<ProbeExample>,
    pub skipped_short: usize,
    pub skipped_invalid: usize,
    pub diagnostics: Vec<String>,
}

/// One example per statement spanning at least five tokens: the last five
/// tokens' activations at `layers`, concatenated layer-major per position.
pub fn build_examples(sources: &[ExampleSource<'_>], layers: &[usize]) -> Result<BuildReport> {
    if layers.is_empty() {
        return Err(ProbeError::Config("no layers selected".into()));
    }
    let mut report = BuildReport::default();
    let mut channels = None;
    for src in sources {
        let a = src.activations;
        if let Some(&bad) = layers.iter().find(|&&l| l >= a.n_layers) {
            return Err(ProbeError::Config(format!(
                "layer {bad} selected but {} has {} layers",
                src.puzzle_id, a.n_layers
            )));
        }
        let c = layers.len() * a.hidden_dim;
        if *channels.get_or_insert(c) != c {
            return Err(ProbeError::Shape(format!("{} has hidden_dim {} unlike earlier inputs", src.puzzle_id, a.hidden_dim)));
        }
        for (i, st) in src.statements.iter().enumerate() {
            let Some((first, last)) = st.token_range else {
                report.skipped_invalid += 1;
                report.diagnostics.push(format!("{}#{i}: no token range", src.puzzle_id));
                continue;
            };
            if last >= a.n_tokens || first > last {
                report.skipped_invalid += 1;
                report.diagnostics.push(format!(
                    "{}#{i}: tokens {first}..={last} outside a {}-token tensor",
                    src.puzzle_id, a.n_tokens
                ));
                continue;
            }
            if last - first + 1 < POSITIONS {
                report.skipped_short += 1;
                continue;
            }
            let mut features = Vec::with_capacity(POSITIONS * c);
            for t in last + 1 - POSITIONS..=last {
                for &l in layers {
                    features.extend_from_slice(a.vector(t, l));
                }
            }
            report.examples.push(ProbeExample {
                puzzle_id: src.puzzle_id.to_string(),
                statement_index: i,
                label: st.label,
                channels: c,
                features,
            });
        }
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeModel {
    pub arch: Architecture,
    /// Flat parameters: conv weights `[out][in][k]`, conv bias, then each
    /// dense layer's `[out][in]` weights followed by its bias.
    pub params: Vec<f64>,
    pub standardizer: Option<Standardizer>,
}

impl ProbeModel {
    pub fn zeros(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        let params = vec![0.0; arch.param_count()];
        Ok(ProbeModel { arch, params, standardizer: None })
    }

    /// Uniform ±1/√fan_in initialization for every weight and bias.
    pub fn init(arch: Architecture, seed: u64) -> Result<Self> {
        let mut m = ProbeModel::zeros(arch)?;
        let l = m.arch.layout();
        let a = &m.arch;
        let mut r = rng(seed);
        let fans = [
            (l.conv_w.clone(), a.in_channels * a.kernel),
            (l.conv_b.clone(), a.in_channels * a.kernel),
            (l.w1.clone(), a.flat()),
            (l.b1.clone(), a.flat()),
            (l.w2.clone(), a.hidden[0]),
            (l.b2.clone(), a.hidden[0]),
            (l.w3.clone(), a.hidden[1]),
            (l.b3.clone(), a.hidden[1]),
        ];
        for (range, fan_in) in fans {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for p in &mut m.params[range] {
                *p = r.random_range(-bound..bound);
            }
        }
        Ok(m)
    }

    fn check_input(&self, e: &ProbeExample) -> Result<()> {
        if e.channels != self.arch.in_channels || e.features.len() != POSITIONS * e.channels {
            return Err(ProbeError::Shape(format!(
                "example has {} channels / {} values, model expects {} channels",
                e.channels,
                e.features.len(),
                self.arch.in_channels
            )));
        }
        Ok(())
    }

    fn prepare(&self, e: &ProbeExample, buf: &mut Vec<f64>) {
        match &self.standardizer {
            Some(s) => s.apply(&e.features, buf),
            None => {
                buf.clear();
                buf.extend(e.features.iter().map(|&v| v as f64));
            }
        }
    }

    pub fn save(&self, meta: &CheckpointMeta, mut w: impl Write) -> Result<()> {
        let header = CheckpointHeader {
            format_version: 1,
            arch: self.arch.clone(),
            n_params: self.params.len(),
            standardized: self.standardizer.is_some(),
            meta: meta.clone(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| ProbeError::Config(e.to_string()))?;
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&(json.len() as u32).to_le_bytes())?;
        w.write_all(&json)?;
        let mut put = |v: f64| w.write_all(&(v as f32).to_le_bytes());
        for &p in &self.params {
            put(p)?;
        }
        if let Some(s) = &self.standardizer {
            for &v in s.mean.iter().chain(&s.std) {
                put(v)?;
            }
        }
        Ok(())
    }

    pub fn load(mut r: impl Read) -> Result<(Self, CheckpointMeta)> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let fmt = |offset: usize, message: &str| ProbeError::Format { offset: offset as u64, message: message.into() };
        if bytes.len() < 12 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(fmt(0, "bad checkpoint magic"));
        }
        let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let body = 12 + hlen;
        if bytes.len() < body {
            return Err(fmt(12, "checkpoint header truncated"));
        }
        let header: CheckpointHeader =
            serde_json::from_slice(&bytes[12..body]).map_err(|e| fmt(12, &format!("checkpoint header: {e}")))?;
        header.arch.validate()?;
        if header.format_version != 1 || header.n_params != header.arch.param_count() {
            return Err(fmt(12, "checkpoint header does not describe this architecture"));
        }
        let c = header.arch.in_channels;
        let floats = header.n_params + if header.standardized { 2 * c } else { 0 };
        let expected = (body + 4 * floats) as u64;
        if bytes.len() as u64 != expected {
            return Err(ProbeError::Truncated { expected, actual: bytes.len() as u64 });
        }
        let vals: Vec<f64> =
            bytes[body..].chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64).collect();
        let params = vals[..header.n_params].to_vec();
        let standardizer = header.standardized.then(|| Standardizer {
            mean: vals[header.n_params..header.n_params + c].to_vec(),
            std: vals[header.n_params + c..].to_vec(),
        });
        Ok((ProbeModel { arch: header.arch, params, standardizer }, header.meta))
    }
}

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"APZPRB1\n";

/// Free-form provenance stored in a checkpoint header.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub layers: Vec<usize>,
    pub hidden_dim: usize,
    pub train: Option<TrainConfig>,
    pub best_epoch: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    format_version: u32,
    arch: Architecture,
    n_params: usize,
    standardized: bool,
    meta: CheckpointMeta,
}

/// Intermediate values of one forward pass.
struct Pass {
    conv: Vec<f64>, // pre-activation, [c][t]
    a0: Vec<f64>,
    z1: Vec<f64>,
    a1: Vec<f64>,
    z2: Vec<f64>,
    a2: Vec<f64>,
    z3: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut s = acc.iter().sum::<f64>();
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn relu(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| x.max(0.0)).collect()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of logit `z` against target `y`, stable for any z.
fn bce_with_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

/// `x` is `[position][channel]`, already standardized.
fn forward_pass(arch: &Architecture, l: &Layout, p: &[f64], x: &[f64], xt: &mut Vec<f64>) -> Pass {
    let (ci, co, k, tl) = (arch.in_channels, arch.conv_channels, arch.kernel, arch.conv_len());
    // channel-major copy so each (out, in) kernel row meets a contiguous window
    xt.clear();
    xt.resize(ci * POSITIONS, 0.0);
    for pos in 0..POSITIONS {
        for c in 0..ci {
            xt[c * POSITIONS + pos] = x[pos * ci + c];
        }
    }
    let w = &p[l.conv_w.clone()];
    let mut conv = vec![0.0; co * tl];
    for o in 0..co {
        let wo = &w[o * ci * k..(o + 1) * ci * k];
        for t in 0..tl {
            let mut s = p[l.conv_b.start + o];
            for c in 0..ci {
                let wk = &wo[c * k..c * k + k];
                let xs = &xt[c * POSITIONS + t..c * POSITIONS + t + k];
                for j in 0..k {
                    s += wk[j] * xs[j];
                }
            }
            conv[o * tl + t] = s;
        }
    }
    let a0 = relu(&conv);
    let [h1, h2] = arch.hidden;
    let flat = arch.flat();
    let w1 = &p[l.w1.clone()];
    let z1: Vec<f64> = (0..h1).map(|j| p[l.b1.start + j] + dot(&w1[j * flat..(j + 1) * flat], &a0)).collect();
    let a1 = relu(&z1);
    let w2 = &p[l.w2.clone()];
    let z2: Vec<f64> = (0..h2).map(|j| p[l.b2.start + j] + dot(&w2[j * h1..(j + 1) * h1], &a1)).collect();
    let a2 = relu(&z2);
    let z3 = p[l.b3.start] + dot(&p[l.w3.clone()], &a2);
    Pass { conv, a0, z1, a1, z2, a2, z3 }
}

/// Adds d(loss)/d(params) for one example into `grad`, scaled by `scale`.
fn backward(
    arch: &Architecture,
    l: &Layout,
    p: &[f64],
    xt: &[f64],
    pass: &Pass,
    y: f64,
    scale: f64,
    grad: &mut [f64],
) {
    let (ci, co, k, tl) = (arch.in_channels, arch.conv_channels, arch.kernel, arch.conv_len());
    let [h1, h2] = arch.hidden;
    let flat = arch.flat();
    let g3 = (sigmoid(pass.z3) - y) * scale;

    grad[l.b3.start] += g3;
    axpy(g3, &pass.a2, &mut grad[l.w3.clone()]);
    let w3 = &p[l.w3.clone()];
    let dz2: Vec<f64> = (0..h2).map(|j| if pass.z2[j] > 0.0 { g3 * w3[j] } else { 0.0 }).collect();

    let mut da1 = vec![0.0; h1];
    for j in 0..h2 {
        if dz2[j] == 0.0 {
            continue;
        }
        grad[l.b2.start + j] += dz2[j];
        axpy(dz2[j], &pass.a1, &mut grad[l.w2.start + j * h1..l.w2.start + (j + 1) * h1]);
        axpy(dz2[j], &p[l.w2.start + j * h1..l.w2.start + (j + 1) * h1], &mut da1);
    }
    let dz1: Vec<f64> = (0..h1).map(|j| if pass.z1[j] > 0.0 { da1[j] } else { 0.0 }).collect();

    let mut da0 = vec![0.0; flat];
    for j in 0..h1 {
        if dz1[j] == 0.0 {
            continue;
        }
        grad[l.b1.start + j] += dz1[j];
        axpy(dz1[j], &pass.a0, &mut grad[l.w1.start + j * flat..l.w1.start + (j + 1) * flat]);
        axpy(dz1[j], &p[l.w1.start + j * flat..l.w1.start + (j + 1) * flat], &mut da0);
    }

    for o in 0..co {
        for t in 0..tl {
            let idx = o * tl + t;
            if pass.conv[idx] <= 0.0 {
                continue;
            }
            let g = da0[idx];
            grad[l.conv_b.start + o] += g;
            let base = l.conv_w.start + o * ci * k;
            for c in 0..ci {
                let xs = &xt[c * POSITIONS + t..c * POSITIONS + t + k];
                for j in 0..k {
                    grad[base + c * k + j] += g * xs[j];
                }
            }
        }
    }
}

/// P(Correct) for one example.
pub fn forward(model: &ProbeModel, example: &ProbeExample) -> Result<f64> {
    model.check_input(example)?;
    let mut x = Vec::new();
    model.prepare(example, &mut x);
    let l = model.arch.layout();
    Ok(sigmoid(forward_pass(&model.arch, &l, &model.params, &x, &mut Vec::new()).z3))
}

/// Mean binary cross-entropy over `examples`.
pub fn mean_loss(model: &ProbeModel, examples: &[ProbeExample]) -> Result<f64> {
    let l = model.arch.layout();
    let (mut x, mut xt) = (Vec::new(), Vec::new());
    let mut total = 0.0;
    for e in examples {
        model.check_input(e)?;
        model.prepare(e, &mut x);
        total += bce_with_logit(forward_pass(&model.arch, &l, &model.params, &x, &mut xt).z3, e.target());
    }
    Ok(total / examples.len().max(1) as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Layers the examples were built from; recorded, not interpreted.
    pub layers: Vec<usize>,
    pub conv_channels: usize,
    pub hidden: [usize; 2],
    pub standardize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 64,
            learning_rate: 1e-3,
            seed: 0,
            layers: Vec::new(),
            conv_channels: 128,
            hidden: [256, 128],
            standardize: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(ProbeError::Config("epochs must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(ProbeError::Config("batch_size must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(ProbeError::Config(format!("learning_rate {} must be positive", self.learning_rate)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub model: ProbeModel,
    pub history: Vec<EpochStats>,
    /// Epoch whose weights were kept (the last one without validation data).
    pub best_epoch: usize,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Adam { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = Self::B1 * self.m[i] + (1.0 - Self::B1) * g;
            self.v[i] = Self::B2 * self.v[i] + (1.0 - Self::B2) * g * g;
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

/// Trains a probe on `train`, selecting the epoch with the best accuracy
/// on `validation` (earliest on ties). Initialization uses stream 0 of
/// the seed and epoch `e`'s shuffle uses stream `e + 1`.
pub fn train(train: &[ProbeExample], validation: &[ProbeExample], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let Some(first) = train.first() else {
        return Err(ProbeError::Data("no training examples".into()));
    };
    let has = |label| train.iter().any(|e| e.label == label);
    if !has(Label::Correct) || !has(Label::Incorrect) {
        return Err(ProbeError::Data("training data contains a single class".into()));
    }
    let arch = Architecture { in_channels: first.channels, conv_channels: cfg.conv_channels, kernel: 3, hidden: cfg.hidden };
    let mut model = ProbeModel::init(arch, derive_seed(cfg.seed, 0))?;
    for e in train.iter().chain(validation) {
        model.check_input(e)?;
    }
    if cfg.standardize {
        model.standardizer = Some(Standardizer::fit(train));
    }
    let l = model.arch.layout();
    let prepared: Vec<Vec<f64>> = train
        .iter()
        .map(|e| {
            let mut x = Vec::new();
            model.prepare(e, &mut x);
            x
        })
        .collect();

    let mut adam = Adam::new(model.params.len());
    let mut grad = vec![0.0; model.params.len()];
    let mut xt = Vec::new();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, Vec<f64>)> = None;

    for epoch in 0..cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut rng(derive_seed(cfg.seed, epoch as u64 + 1)));
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let pass = forward_pass(&model.arch, &l, &model.params, &prepared[i], &mut xt);
                let y = train[i].target();
                loss_sum += bce_with_logit(pass.z3, y);
                backward(&model.arch, &l, &model.params, &xt, &pass, y, scale, &mut grad);
            }
            adam.step(&mut model.params, &grad, cfg.learning_rate);
        }
        let train_loss = loss_sum / train.len() as f64;
        if !train_loss.is_finite() || model.params.iter().any(|p| !p.is_finite()) {
            return Err(ProbeError::Diverged { epoch, loss: train_loss });
        }
        let validation_accuracy = if validation.is_empty() { None } else { Some(evaluate(&model, validation)?.accuracy) };
        if let Some(acc) = validation_accuracy {
            if best.as_ref().is_none_or(|(b, _, _)| acc > *b) {
                best = Some((acc, epoch, model.params.clone()));
            }
        }
        history.push(EpochStats { epoch, train_loss, validation_accuracy });
    }
    let best_epoch = match best {
        Some((_, epoch, params)) => {
            model.params = params;
            epoch
        }
        None => cfg.epochs - 1,
    };
    Ok(TrainOutcome { model, history, best_epoch })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    /// `None` when nothing was predicted as this class.
    pub precision: Option<f64>,
    /// `None` when the class does not occur.
    pub recall: Option<f64>,
    pub support: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub count: usize,
    pub accuracy: f64,
    pub correct: ClassMetrics,
    pub incorrect: ClassMetrics,
    /// `[actual][predicted]`, index 0 = Correct, 1 = Incorrect.
    pub confusion: [[usize; 2]; 2],
}

/// A statement is predicted Correct when P(Correct) ≥ 0.5.
pub fn evaluate(model: &ProbeModel, examples: &[ProbeExample]) -> Result<Metrics> {
    if examples.is_empty() {
        return Err(ProbeError::Data("cannot evaluate on an empty set".into()));
    }
    let l = model.arch.layout();
    let (mut x, mut xt) = (Vec::new(), Vec::new());
    let mut confusion = [[0usize; 2]; 2];
    for e in examples {
        model.check_input(e)?;
        model.prepare(e, &mut x);
        let prob = sigmoid(forward_pass(&model.arch, &l, &model.params, &x, &mut xt).z3);
        let predicted = if prob >= 0.5 { 0 } else { 1 };
        let actual = if e.label == Label::Correct { 0 } else { 1 };
        confusion[actual][predicted] += 1;
    }
    let class = |k: usize| {
        let tp = confusion[k][k] as f64;
        let predicted = confusion[0][k] + confusion[1][k];
        let support = confusion[k][0] + confusion[k][1];
        ClassMetrics {
            precision: (predicted > 0).then(|| tp / predicted as f64),
            recall: (support > 0).then(|| tp / support as f64),
            support,
        }
    };
    Ok(Metrics {
        count: examples.len(),
        accuracy: (confusion[0][0] + confusion[1][1]) as f64 / examples.len() as f64,
        correct: class(0),
        incorrect: class(1),
        confusion,
    })
}

/// Analytic loss gradient of one example, with respect to every parameter.
pub fn loss_gradient(model: &ProbeModel, example: &ProbeExample) -> Result<(f64, Vec<f64>)> {
    model.check_input(example)?;
    let l = model.arch.layout();
    let (mut x, mut xt) = (Vec::new(), Vec::new());
    model.prepare(example, &mut x);
    let pass = forward_pass(&model.arch, &l, &model.params, &x, &mut xt);
    let mut grad = vec![0.0; model.params.len()];
    backward(&model.arch, &l, &model.params, &xt, &pass, example.target(), 1.0, &mut grad);
    Ok((bce_with_logit(pass.z3, example.target()), grad))
}

/// Largest relative error between the analytic gradient and central
/// differences with step `epsilon`, over every parameter:
/// `|a − n| / max(|a|, |n|, 1e-6)`.
pub fn gradient_check(model: &ProbeModel, example: &ProbeExample, epsilon: f64) -> Result<f64> {
    if !(1e-6..=1e-3).contains(&epsilon) {
        return Err(ProbeError::Config(format!("epsilon {epsilon} outside [1e-6, 1e-3]")));
    }
    let (_, analytic) = loss_gradient(model, example)?;
    let l = model.arch.layout();
    let (mut x, mut xt) = (Vec::new(), Vec::new());
    model.prepare(example, &mut x);
    let y = example.target();
    let mut params = model.params.clone();
    let mut worst = 0.0f64;
    for i in 0..params.len() {
        let keep = params[i];
        params[i] = keep + epsilon;
        let up = bce_with_logit(forward_pass(&model.arch, &l, &params, &x, &mut xt).z3, y);
        params[i] = keep - epsilon;
        let down = bce_with_logit(forward_pass(&model.arch, &l, &params, &x, &mut xt).z3, y);
        params[i] = keep;
        let numeric = (up - down) / (2.0 * epsilon);
        let a = analytic[i];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(err);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example(channels: usize, label: Label, f: impl Fn(usize) -> f32) -> ProbeExample {
        ProbeExample {
            puzzle_id: "p".into(),
            statement_index: 0,
            label,
            channels,
            features: (0..POSITIONS * channels).map(f).collect(),
        }
    }

    #[test]
    fn standard_shapes() {
        let a = Architecture::standard(64);
        assert_eq!(a.conv_len(), 3);
        assert_eq!(a.flat(), 384);
        assert_eq!(a.param_count(), 128 * 64 * 3 + 128 + 384 * 256 + 256 + 256 * 128 + 128 + 128 + 1);
        let m = ProbeModel::init(a, 0).unwrap();
        assert_eq!(m.params.len(), 156_289);
    }

    #[test]
    fn zero_model_gives_one_half() {
        let m = ProbeModel::zeros(Architecture::standard(4)).unwrap();
        let e = example(4, Label::Correct, |i| i as f32);
        assert_eq!(forward(&m, &e).unwrap(), 0.5);
        let wrong = example(3, Label::Correct, |i| i as f32);
        assert!(forward(&m, &wrong).is_err());
    }

    #[test]
    fn position_order_matters() {
        let m = ProbeModel::init(Architecture::standard(6), 3).unwrap();
        let e = example(6, Label::Correct, |i| ((i * 7919) % 13) as f32 / 13.0 - 0.5);
        let mut swapped = e.clone();
        for c in 0..6 {
            swapped.features.swap(c, 4 * 6 + c);
        }
        assert_ne!(forward(&m, &e).unwrap(), forward(&m, &swapped).unwrap());
    }

    #[test]
    fn tiny_gradient_check() {
        let arch = Architecture { in_channels: 2, conv_channels: 3, kernel: 3, hidden: [4, 3] };
        let m = ProbeModel::init(arch, 11).unwrap();
        let e = example(2, Label::Incorrect, |i| (i as f32 * 0.37).sin());
        assert!(gradient_check(&m, &e, 1e-5).unwrap() <= 1e-4);
        assert!(gradient_check(&m, &e, 1e-2).is_err());
    }

    #[test]
    fn training_refusals() {
        let e = example(2, Label::Correct, |_| 1.0);
        let cfg = TrainConfig::default();
        assert!(matches!(train(&[e.clone(), e.clone()], &[], &cfg), Err(ProbeError::Data(_))));
        let cfg0 = TrainConfig { epochs: 0, ..TrainConfig::default() };
        assert!(matches!(train(&[e], &[], &cfg0), Err(ProbeError::Config(_))));
        let m = ProbeModel::zeros(Architecture::standard(2)).unwrap();
        assert!(evaluate(&m, &[]).is_err());
    }

    #[test]
    fn checkpoint_round_trip_is_f32_exact() {
        let arch = Architecture { in_channels: 2, conv_channels: 2, kernel: 3, hidden: [3, 2] };
        let mut m = ProbeModel::init(arch, 5).unwrap();
        m.params.iter_mut().for_each(|p| *p = *p as f32 as f64);
        m.standardizer = Some(Standardizer { mean: vec![0.5, -1.0], std: vec![2.0, 0.25] });
        let meta = CheckpointMeta { layers: vec![3], hidden_dim: 2, train: None, best_epoch: Some(4) };
        let mut buf = Vec::new();
        m.save(&meta, &mut buf).unwrap();
        let (back, meta2) = ProbeModel::load(&buf[..]).unwrap();
        assert_eq!(back, m);
        assert_eq!(meta2, meta);
        buf.pop();
        assert!(ProbeModel::load(&buf[..]).is_err());
    }
}
