//! Multi-label feed-forward relation network.
//!
//! ReLU hidden layers, a 20-unit sigmoid output and element-wise binary
//! cross-entropy averaged over the batch and the 20 outputs. Everything runs
//! in f64. Gradients are reduced over fixed-size chunks of the batch in
//! chunk order, so training is bit-identical with or without rayon.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::PairDataset;
use crate::error::{Error, Result};
use crate::par::*;
use crate::relation::{RelationMask, NUM_RELATIONS};

pub const CHECKPOINT_FORMAT: u32 = 1;
pub const LOSS_EPSILON: f64 = 1e-7;

/// Examples per gradient work unit. Fixed so the summation tree does not
/// depend on the thread count.
const GRAD_CHUNK: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelNetConfig {
    pub input_dim: usize,
    pub hidden_sizes: Vec<usize>,
    #[serde(default = "defaults::learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "defaults::epochs")]
    pub epochs: usize,
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "defaults::beta1")]
    pub adam_beta1: f64,
    #[serde(default = "defaults::beta2")]
    pub adam_beta2: f64,
    #[serde(default = "defaults::eps")]
    pub adam_eps: f64,
}

mod defaults {
    pub fn learning_rate() -> f64 {
        1e-3
    }
    pub fn epochs() -> usize {
        100
    }
    pub fn batch_size() -> usize {
        32
    }
    pub fn beta1() -> f64 {
        0.9
    }
    pub fn beta2() -> f64 {
        0.999
    }
    pub fn eps() -> f64 {
        1e-8
    }
}

impl RelNetConfig {
    pub fn new(input_dim: usize, hidden_sizes: Vec<usize>) -> Self {
        RelNetConfig {
            input_dim,
            hidden_sizes,
            learning_rate: defaults::learning_rate(),
            epochs: defaults::epochs(),
            batch_size: defaults::batch_size(),
            seed: 0,
            adam_beta1: defaults::beta1(),
            adam_beta2: defaults::beta2(),
            adam_eps: defaults::eps(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::Config("input_dim must be positive".into()));
        }
        if !(1..=3).contains(&self.hidden_sizes.len()) {
            return Err(Error::Config(format!(
                "expected 1 to 3 hidden layers, got {}",
                self.hidden_sizes.len()
            )));
        }
        if self.hidden_sizes.contains(&0) {
            return Err(Error::Config("hidden layer sizes must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::Config("adam betas must lie in [0, 1)".into()));
        }
        if !(self.adam_eps.is_finite() && self.adam_eps > 0.0) {
            return Err(Error::Config("adam_eps must be positive".into()));
        }
        Ok(())
    }

    /// (rows, cols) of every layer, input to output.
    pub fn shapes(&self) -> Vec<(usize, usize)> {
        let mut fan_in = self.input_dim;
        let mut shapes = Vec::with_capacity(self.hidden_sizes.len() + 1);
        for &h in self.hidden_sizes.iter().chain(&[NUM_RELATIONS]) {
            shapes.push((h, fan_in));
            fan_in = h;
        }
        shapes
    }
}

/// Dense layer, `w` row-major with `rows` outputs and `cols` inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub rows: usize,
    pub cols: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Layer {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Layer {
            rows,
            cols,
            w: vec![0.0; rows * cols],
            b: vec![0.0; rows],
        }
    }

    fn affine(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            self.w
                .chunks_exact(self.cols)
                .zip(&self.b)
                .map(|(row, b)| row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + b),
        );
    }

    fn add_assign(&mut self, other: &Layer) {
        for (a, b) in self.w.iter_mut().zip(&other.w) {
            *a += b;
        }
        for (a, b) in self.b.iter_mut().zip(&other.b) {
            *a += b;
        }
    }

    fn params(&self) -> impl Iterator<Item = &f64> {
        self.w.iter().chain(&self.b)
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.w.iter_mut().chain(self.b.iter_mut())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RelNet {
    pub config: RelNetConfig,
    pub layers: Vec<Layer>,
}

/// Gradients with the same layout as the net's layers.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    fn zeros_like(net: &RelNet) -> Self {
        Gradients {
            layers: net.layers.iter().map(|l| Layer::zeros(l.rows, l.cols)).collect(),
        }
    }

    /// All partials in the order of [`RelNet::params`].
    pub fn flat(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.params().copied()).collect()
    }

    pub fn norm(&self) -> f64 {
        self.flat().iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of one output against a 0/1 target, with the
/// prediction clamped to [ε, 1−ε].
pub fn bce(y: f64, t: f64) -> f64 {
    let y = y.clamp(LOSS_EPSILON, 1.0 - LOSS_EPSILON);
    -(t * y.ln() + (1.0 - t) * (1.0 - y).ln())
}

pub struct Sample<'a> {
    pub input: &'a [f64],
    pub target: RelationMask,
}

impl RelNet {
    /// Glorot-uniform weights, zero biases.
    pub fn init(config: RelNetConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let layers = config
            .shapes()
            .into_iter()
            .map(|(rows, cols)| {
                let bound = (6.0 / (rows + cols) as f64).sqrt();
                let mut layer = Layer::zeros(rows, cols);
                for w in &mut layer.w {
                    *w = rng.random_range(-bound..=bound);
                }
                layer
            })
            .collect();
        Ok(RelNet { config, layers })
    }

    /// Builds a net from explicit layers, checking the shape chain.
    pub fn from_layers(config: RelNetConfig, layers: Vec<Layer>) -> Result<Self> {
        config.validate()?;
        let expected = config.shapes();
        let got: Vec<_> = layers.iter().map(|l| (l.rows, l.cols)).collect();
        if got != expected {
            return Err(Error::Shape(format!("layers {got:?} do not chain as {expected:?}")));
        }
        for (k, l) in layers.iter().enumerate() {
            if l.w.len() != l.rows * l.cols || l.b.len() != l.rows {
                return Err(Error::Shape(format!(
                    "layer {k}: {}x{} with {} weights and {} biases",
                    l.rows,
                    l.cols,
                    l.w.len(),
                    l.b.len()
                )));
            }
            if l.params().any(|p| !p.is_finite()) {
                return Err(Error::Invalid(format!("layer {k} has non-finite parameters")));
            }
        }
        Ok(RelNet { config, layers })
    }

    pub fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.params().copied()).collect()
    }

    pub fn param_mut(&mut self, mut idx: usize) -> &mut f64 {
        for l in &mut self.layers {
            let n = l.w.len() + l.b.len();
            if idx < n {
                return l.params_mut().nth(idx).unwrap();
            }
            idx -= n;
        }
        panic!("parameter index out of range");
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.config.input_dim {
            return Err(Error::Shape(format!(
                "input has length {}, net expects {}",
                x.len(),
                self.config.input_dim
            )));
        }
        Ok(())
    }

    /// Pre-activations of every layer.
    fn trace(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut zs: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::new();
            layer.affine(&h, &mut z);
            if k + 1 < self.layers.len() {
                h.clear();
                h.extend(z.iter().map(|v| v.max(0.0)));
            }
            zs.push(z);
        }
        zs
    }

    pub fn forward(&self, x: &[f64]) -> Result<[f64; NUM_RELATIONS]> {
        self.check_input(x)?;
        let zs = self.trace(x);
        let mut y = [0.0; NUM_RELATIONS];
        for (y, z) in y.iter_mut().zip(zs.last().unwrap()) {
            *y = sigmoid(*z);
        }
        Ok(y)
    }

    /// Scores for every example, in order.
    pub fn predict(&self, ds: &PairDataset) -> Result<Vec<[f64; NUM_RELATIONS]>> {
        ds.examples.par_iter().map(|e| self.forward(&e.input)).collect()
    }

    /// Mean clamped BCE over the batch and the 20 outputs.
    pub fn loss(&self, batch: &[Sample]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Invalid("empty batch".into()));
        }
        let mut total = 0.0;
        for s in batch {
            let y = self.forward(s.input)?;
            let t = s.target.to_target();
            total += y.iter().zip(&t).map(|(&y, &t)| bce(y, t)).sum::<f64>();
        }
        Ok(total / (batch.len() * NUM_RELATIONS) as f64)
    }

    /// Adds one example's contribution to `grads`, with the output delta
    /// scaled by `scale`, and returns its summed (unscaled) BCE.
    fn accumulate(&self, s: &Sample, scale: f64, grads: &mut Gradients) -> f64 {
        let zs = self.trace(s.input);
        let t = s.target.to_target();
        let out = zs.last().unwrap();
        let mut loss = 0.0;
        let mut delta: Vec<f64> = out
            .iter()
            .zip(&t)
            .map(|(&z, &t)| {
                let y = sigmoid(z);
                loss += bce(y, t);
                (y - t) * scale
            })
            .collect();

        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let g = &mut grads.layers[k];
            let relu_in: Option<&Vec<f64>> = if k == 0 { None } else { Some(&zs[k - 1]) };
            // activation feeding this layer
            let input_at = |j: usize| match relu_in {
                None => s.input[j],
                Some(z) => z[j].max(0.0),
            };
            for (r, &d) in delta.iter().enumerate() {
                g.b[r] += d;
                if d != 0.0 {
                    let row = &mut g.w[r * layer.cols..(r + 1) * layer.cols];
                    for (j, gw) in row.iter_mut().enumerate() {
                        *gw += d * input_at(j);
                    }
                }
            }
            if let Some(z) = relu_in {
                let mut next = vec![0.0; layer.cols];
                for (r, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let row = &layer.w[r * layer.cols..(r + 1) * layer.cols];
                    for (n, w) in next.iter_mut().zip(row) {
                        *n += d * w;
                    }
                }
                for (n, &z) in next.iter_mut().zip(z) {
                    if z <= 0.0 {
                        *n = 0.0;
                    }
                }
                delta = next;
            }
        }
        loss
    }

    /// Loss and exact gradients of [`RelNet::loss`] on `batch`. The clamp is
    /// treated as inactive, so the output delta is (y − t)/(B·20).
    pub fn gradient(&self, batch: &[Sample]) -> Result<(f64, Gradients)> {
        if batch.is_empty() {
            return Err(Error::Invalid("empty batch".into()));
        }
        for s in batch {
            self.check_input(s.input)?;
        }
        let denom = (batch.len() * NUM_RELATIONS) as f64;
        let scale = 1.0 / denom;
        let partials: Vec<(f64, Gradients)> = batch
            .par_chunks(GRAD_CHUNK)
            .map(|chunk| {
                let mut g = Gradients::zeros_like(self);
                let mut loss = 0.0;
                for s in chunk {
                    loss += self.accumulate(s, scale, &mut g);
                }
                (loss, g)
            })
            .collect();
        let mut iter = partials.into_iter();
        let (mut loss, mut grads) = iter.next().unwrap();
        for (l, g) in iter {
            loss += l;
            for (a, b) in grads.layers.iter_mut().zip(&g.layers) {
                a.add_assign(b);
            }
        }
        Ok((loss / denom, grads))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = self.to_json();
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn to_json(&self) -> String {
        let ck = CheckpointRef {
            format: CHECKPOINT_FORMAT,
            config: &self.config,
            layers: &self.layers,
        };
        let mut s = serde_json::to_string(&ck).expect("checkpoint serializes");
        s.push('\n');
        s
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn from_json(text: &str, file: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::format(file, format!("corrupt checkpoint: {e}")))?;
        match value.get("format").and_then(|f| f.as_u64()) {
            Some(f) if f == CHECKPOINT_FORMAT as u64 => {}
            Some(f) => {
                return Err(Error::format(
                    file,
                    format!("unsupported checkpoint format {f} (expected {CHECKPOINT_FORMAT})"),
                ))
            }
            None => return Err(Error::format(file, "checkpoint lacks a format version")),
        }
        let ck: Checkpoint =
            serde_json::from_value(value).map_err(|e| Error::format(file, format!("corrupt checkpoint: {e}")))?;
        RelNet::from_layers(ck.config, ck.layers)
    }
}

#[derive(Serialize)]
struct CheckpointRef<'a> {
    format: u32,
    config: &'a RelNetConfig,
    layers: &'a [Layer],
}

#[derive(Deserialize)]
struct Checkpoint {
    config: RelNetConfig,
    layers: Vec<Layer>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    /// Mean training loss of each epoch, measured on each batch before its
    /// update and weighted by batch size.
    pub losses: Vec<f64>,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, net: &mut RelNet, grads: &Gradients) {
        let c = &net.config;
        let (b1, b2, lr, eps) = (c.adam_beta1, c.adam_beta2, c.learning_rate, c.adam_eps);
        self.t += 1;
        let bc1 = 1.0 - b1.powi(self.t);
        let bc2 = 1.0 - b2.powi(self.t);
        let params = net.layers.iter_mut().flat_map(|l| l.params_mut());
        let gs = grads.layers.iter().flat_map(|l| l.params());
        for (((p, g), m), v) in params.zip(gs).zip(&mut self.m).zip(&mut self.v) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
        }
    }
}

/// Adam training with a seeded shuffle each epoch. Aborts on a non-finite
/// loss or parameter.
pub fn train(net: &mut RelNet, ds: &PairDataset) -> Result<TrainReport> {
    let cfg = net.config.clone();
    cfg.validate()?;
    if ds.input_dim() != cfg.input_dim {
        return Err(Error::Shape(format!(
            "dataset {} has input length {}, net expects {}",
            ds.source,
            ds.input_dim(),
            cfg.input_dim
        )));
    }
    let mut losses = Vec::with_capacity(cfg.epochs);
    if cfg.epochs == 0 {
        return Ok(TrainReport { losses });
    }
    if ds.is_empty() {
        return Err(Error::Invalid(format!("dataset {} is empty", ds.source)));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut adam = Adam::new(net.param_count());
    let mut order: Vec<usize> = (0..ds.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<Sample> = idx
                .iter()
                .map(|&i| Sample {
                    input: &ds.examples[i].input,
                    target: ds.examples[i].target,
                })
                .collect();
            let (loss, grads) = net.gradient(&batch)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite {
                    what: "loss",
                    epoch,
                    batch: b,
                });
            }
            adam.step(net, &grads);
            if net.layers.iter().any(|l| l.params().any(|p| !p.is_finite())) {
                return Err(Error::NonFinite {
                    what: "parameter",
                    epoch,
                    batch: b,
                });
            }
            total += loss * idx.len() as f64;
        }
        losses.push(total / ds.len() as f64);
    }
    Ok(TrainReport { losses })
}
