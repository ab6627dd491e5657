//! A small dense-network substrate.
//!
//! Parameters are kept in one flat buffer, layer by layer: the `n_out × n_in`
//! weight matrix in row-major order followed by the `n_out` biases. Gradients
//! share that layout, so optimisers and the serialised form operate on plain
//! slices.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Identity,
    Softmax,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
    output: OutputActivation,
}

/// Flat gradient buffer with the same layout as [`Mlp`] parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients(pub Vec<f64>);

impl Gradients {
    pub fn zeros_like(m: &Mlp) -> Self {
        Gradients(vec![0.0; m.params.len()])
    }

    pub fn scale(&mut self, k: f64) {
        self.0.iter_mut().for_each(|g| *g *= k);
    }

    pub fn add(&mut self, other: &Gradients) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += b;
        }
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn clip_norm(&mut self, max_norm: f64) {
        let n = self.norm();
        if n > max_norm && n > 0.0 {
            self.scale(max_norm / n);
        }
    }
}

/// Activations recorded during a forward pass, consumed by [`Mlp::backward`].
#[derive(Clone, Debug)]
pub struct Trace {
    /// `acts[0]` is the input; `acts[l]` the post-activation output of layer `l`.
    /// The last entry holds the pre-activation output (logits for softmax).
    acts: Vec<Vec<f64>>,
}

impl Trace {
    pub fn logits(&self) -> &[f64] {
        self.acts.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}

impl Mlp {
    /// Seeded uniform initialisation in `±1/sqrt(n_in)`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], output: OutputActivation, rng: &mut R) -> Result<Self> {
        let mut m = Self::zeros(sizes, output)?;
        let mut offset = 0;
        for w in m.sizes.windows(2) {
            let (n_in, n_out) = (w[0], w[1]);
            let bound = 1.0 / (n_in as f64).sqrt();
            for p in &mut m.params[offset..offset + (n_in + 1) * n_out] {
                *p = rng.random_range(-bound..=bound);
            }
            offset += (n_in + 1) * n_out;
        }
        Ok(m)
    }

    pub fn zeros(sizes: &[usize], output: OutputActivation) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::config("an MLP needs at least two non-empty layers"));
        }
        let n = Self::count_params(sizes);
        Ok(Self {
            sizes: sizes.to_vec(),
            params: vec![0.0; n],
            output,
        })
    }

    pub fn from_params(sizes: &[usize], output: OutputActivation, params: Vec<f64>) -> Result<Self> {
        let mut m = Self::zeros(sizes, output)?;
        if params.len() != m.params.len() {
            return Err(Error::Dimension {
                expected: m.params.len(),
                actual: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("model parameters"));
        }
        m.params = params;
        Ok(m)
    }

    pub fn count_params(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn output(&self) -> OutputActivation {
        self.output
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let trace = self.forward_trace(x)?;
        Ok(self.finish(trace.logits()))
    }

    fn finish(&self, logits: &[f64]) -> Vec<f64> {
        match self.output {
            OutputActivation::Identity => logits.to_vec(),
            OutputActivation::Softmax => softmax(logits),
        }
    }

    /// Forward pass keeping every activation for a later backward pass.
    pub fn forward_trace(&self, x: &[f64]) -> Result<Trace> {
        if x.len() != self.sizes[0] {
            return Err(Error::Dimension {
                expected: self.sizes[0],
                actual: x.len(),
            });
        }
        let n_layers = self.sizes.len() - 1;
        let mut acts = Vec::with_capacity(n_layers + 1);
        acts.push(x.to_vec());
        let mut offset = 0;
        for l in 0..n_layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[offset..offset + n_in * n_out];
            let b = &self.params[offset + n_in * n_out..offset + (n_in + 1) * n_out];
            let input = &acts[l];
            let mut out: Vec<f64> = (0..n_out)
                .map(|j| {
                    let row = &w[j * n_in..(j + 1) * n_in];
                    b[j] + row.iter().zip(input).map(|(a, c)| a * c).sum::<f64>()
                })
                .collect();
            if l + 1 < n_layers {
                out.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(out);
            offset += (n_in + 1) * n_out;
        }
        Ok(Trace { acts })
    }

    /// Output after the head activation, given a trace.
    pub fn output_of(&self, trace: &Trace) -> Vec<f64> {
        self.finish(trace.logits())
    }

    /// Accumulate parameter gradients into `grads` given `dL/dlogits`.
    ///
    /// For an identity head the logits are the output. Returns `dL/dinput`.
    pub fn backward(&self, trace: &Trace, grad_logits: &[f64], grads: &mut Gradients) -> Vec<f64> {
        let n_layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(n_layers);
        let mut o = 0;
        for l in 0..n_layers {
            offsets.push(o);
            o += (self.sizes[l] + 1) * self.sizes[l + 1];
        }
        let mut delta = grad_logits.to_vec();
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let offset = offsets[l];
            let input = &trace.acts[l];
            let w = &self.params[offset..offset + n_in * n_out];
            {
                let g = &mut grads.0[offset..offset + (n_in + 1) * n_out];
                for j in 0..n_out {
                    let d = delta[j];
                    if d != 0.0 {
                        for i in 0..n_in {
                            g[j * n_in + i] += d * input[i];
                        }
                        g[n_in * n_out + j] += d;
                    }
                }
            }
            let mut prev = vec![0.0; n_in];
            for j in 0..n_out {
                let d = delta[j];
                if d != 0.0 {
                    for i in 0..n_in {
                        prev[i] += w[j * n_in + i] * d;
                    }
                }
            }
            if l > 0 {
                // input is tanh(h): derivative 1 - tanh²
                for (p, a) in prev.iter_mut().zip(input) {
                    *p *= 1.0 - a * a;
                }
            }
            delta = prev;
        }
        delta
    }

    /// Mean loss over the batch and its exact gradient.
    pub fn grad(&self, batch: &Batch<'_>) -> Result<(f64, Gradients)> {
        let n = batch.len();
        if n == 0 {
            return Err(Error::Dataset("empty batch".into()));
        }
        let mut grads = Gradients::zeros_like(self);
        let mut loss = 0.0;
        for i in 0..n {
            let trace = self.forward_trace(batch.input(i))?;
            let g = match batch {
                Batch::Regression { targets, .. } => {
                    let y = &targets[i];
                    let out = trace.logits();
                    if y.len() != out.len() {
                        return Err(Error::Dimension {
                            expected: out.len(),
                            actual: y.len(),
                        });
                    }
                    let mut g = Vec::with_capacity(out.len());
                    for (o, t) in out.iter().zip(y.iter()) {
                        let e = o - t;
                        loss += e * e;
                        g.push(2.0 * e);
                    }
                    g
                }
                Batch::Classification { labels, .. } => {
                    let probs = softmax(trace.logits());
                    let c = labels[i];
                    if c >= probs.len() {
                        return Err(Error::Dimension {
                            expected: probs.len(),
                            actual: c + 1,
                        });
                    }
                    loss -= probs[c].max(1e-300).ln();
                    let mut g = probs;
                    g[c] -= 1.0;
                    g
                }
            };
            self.backward(&trace, &g, &mut grads);
        }
        let inv = 1.0 / n as f64;
        grads.scale(inv);
        Ok((loss * inv, grads))
    }

    /// Mean loss without gradients.
    pub fn loss(&self, batch: &Batch<'_>) -> Result<f64> {
        let n = batch.len();
        if n == 0 {
            return Err(Error::Dataset("empty batch".into()));
        }
        let mut loss = 0.0;
        for i in 0..n {
            let trace = self.forward_trace(batch.input(i))?;
            match batch {
                Batch::Regression { targets, .. } => {
                    for (o, t) in trace.logits().iter().zip(targets[i].iter()) {
                        loss += (o - t) * (o - t);
                    }
                }
                Batch::Classification { labels, .. } => {
                    let probs = softmax(trace.logits());
                    loss -= probs[labels[i]].max(1e-300).ln();
                }
            }
        }
        Ok(loss / n as f64)
    }

    /// `θ ← θ − lr·g`.
    pub fn sgd_step(&mut self, g: &Gradients, lr: f64) -> Result<()> {
        if !(lr >= 0.0) {
            return Err(Error::config("learning rate must be non-negative"));
        }
        check_gradients(self, g)?;
        for (p, d) in self.params.iter_mut().zip(&g.0) {
            *p -= lr * d;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path, norm: Option<&Standardizer>, metadata: BTreeMap<String, String>) -> Result<()> {
        let file = ModelFile::new(self, norm, metadata);
        std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
        Ok(())
    }
}

fn check_gradients(m: &Mlp, g: &Gradients) -> Result<()> {
    if g.0.len() != m.params.len() {
        return Err(Error::Dimension {
            expected: m.params.len(),
            actual: g.0.len(),
        });
    }
    if g.0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("gradient"));
    }
    Ok(())
}

/// A supervised batch: inputs with either regression targets or class labels.
#[derive(Clone, Copy, Debug)]
pub enum Batch<'a> {
    Regression {
        inputs: &'a [Vec<f64>],
        targets: &'a [Vec<f64>],
    },
    Classification {
        inputs: &'a [Vec<f64>],
        labels: &'a [usize],
    },
}

impl<'a> Batch<'a> {
    pub fn len(&self) -> usize {
        match self {
            Batch::Regression { inputs, .. } | Batch::Classification { inputs, .. } => inputs.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn input(&self, i: usize) -> &'a [f64] {
        match self {
            Batch::Regression { inputs, .. } | Batch::Classification { inputs, .. } => &inputs[i],
        }
    }
}

/// Adam optimiser over a flat parameter slice.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n_params: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if grad.len() != params.len() || params.len() != self.m.len() {
            return Err(Error::Dimension {
                expected: self.m.len(),
                actual: grad.len(),
            });
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("gradient"));
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / bc1;
            let vh = self.v[i] / bc2;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            batch_size: 32,
            epochs: 50,
            seed: 0,
            optimizer: OptimizerKind::Adam,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::config("learning_rate must be positive"));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::config("batch_size and epochs must be positive"));
        }
        Ok(())
    }
}

/// Minibatch training. `on_epoch(epoch, model, mean_train_loss)` runs after each epoch.
pub fn fit<F>(m: &mut Mlp, batch: &Batch<'_>, cfg: &TrainConfig, mut on_epoch: F) -> Result<Vec<f64>>
where
    F: FnMut(usize, &Mlp, f64),
{
    cfg.validate()?;
    if batch.is_empty() {
        return Err(Error::Dataset("cannot train on an empty dataset".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..batch.len()).collect();
    let mut adam = Adam::new(m.param_count(), cfg.learning_rate);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let (loss, g) = match batch {
                Batch::Regression { inputs, targets } => {
                    let xs: Vec<Vec<f64>> = chunk.iter().map(|&i| inputs[i].clone()).collect();
                    let ys: Vec<Vec<f64>> = chunk.iter().map(|&i| targets[i].clone()).collect();
                    m.grad(&Batch::Regression { inputs: &xs, targets: &ys })?
                }
                Batch::Classification { inputs, labels } => {
                    let xs: Vec<Vec<f64>> = chunk.iter().map(|&i| inputs[i].clone()).collect();
                    let ys: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
                    m.grad(&Batch::Classification { inputs: &xs, labels: &ys })?
                }
            };
            match cfg.optimizer {
                OptimizerKind::Sgd => m.sgd_step(&g, cfg.learning_rate)?,
                OptimizerKind::Adam => adam.step(&mut m.params, &g.0)?,
            }
            total += loss * chunk.len() as f64;
        }
        let mean = total / batch.len() as f64;
        if !mean.is_finite() {
            return Err(Error::NonFinite("training loss"));
        }
        history.push(mean);
        on_epoch(epoch, m, mean);
    }
    Ok(history)
}

/// Per-feature z-score statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows.first().ok_or_else(|| Error::Dataset("no rows to standardise".into()))?;
        let d = first.len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, x) in mean.iter_mut().zip(r) {
                *m += x / n;
            }
        }
        let mut var = vec![0.0; d];
        for r in rows {
            for ((v, x), m) in var.iter_mut().zip(r).zip(&mean) {
                *v += (x - m) * (x - m) / n;
            }
        }
        // constant features pass through centred but unscaled
        let std = var.into_iter().map(|v| if v > 1e-12 { v.sqrt() } else { 1.0 }).collect();
        Ok(Self { mean, std })
    }

    pub fn identity(d: usize) -> Self {
        Self {
            mean: vec![0.0; d],
            std: vec![1.0; d],
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

pub const MODEL_FORMAT: &str = "ringsim-mlp";
pub const MODEL_VERSION: u32 = 1;

/// On-disk JSON form of a network plus its input normalisation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub layer_sizes: Vec<usize>,
    pub output: OutputActivation,
    /// Row-major weights then biases, layer by layer.
    pub params: Vec<f64>,
    pub input_norm: Option<Standardizer>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl ModelFile {
    pub fn new(m: &Mlp, norm: Option<&Standardizer>, metadata: BTreeMap<String, String>) -> Self {
        Self {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            layer_sizes: m.sizes.clone(),
            output: m.output,
            params: m.params.clone(),
            input_norm: norm.cloned(),
            metadata,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: ModelFile = serde_json::from_str(&text)?;
        if file.format != MODEL_FORMAT {
            return Err(Error::config(format!("{}: not a {MODEL_FORMAT} file", path.display())));
        }
        if file.version != MODEL_VERSION {
            return Err(Error::ModelVersion(file.version));
        }
        Ok(file)
    }

    pub fn to_mlp(&self) -> Result<Mlp> {
        Mlp::from_params(&self.layer_sizes, self.output, self.params.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn parameter_count_formula() {
        let m = Mlp::zeros(&[3, 24, 24, 1], OutputActivation::Identity).unwrap();
        assert_eq!(m.param_count(), 4 * 24 + 25 * 24 + 25);
        assert_eq!(m.param_count(), 721);
    }

    #[test]
    fn zero_network_outputs_zero() {
        let m = Mlp::zeros(&[3, 5, 2], OutputActivation::Identity).unwrap();
        assert_eq!(m.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_layer_passes_input() {
        let params = vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0];
        let m = Mlp::from_params(&[2, 2], OutputActivation::Identity, params).unwrap();
        assert_eq!(m.forward(&[0.3, -7.0]).unwrap(), vec![0.3, -7.0]);
    }

    #[test]
    fn softmax_head_normalised() {
        let m = Mlp::new(&[4, 8, 6], OutputActivation::Softmax, &mut rng(3)).unwrap();
        let p = m.forward(&[0.1, 2.0, -1.0, 0.5]).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let m = Mlp::zeros(&[3, 2], OutputActivation::Identity).unwrap();
        assert!(matches!(m.forward(&[1.0]), Err(Error::Dimension { expected: 3, actual: 1 })));
    }

    #[test]
    fn mse_gradient_zero_at_perfect_fit() {
        let m = Mlp::new(&[2, 3, 1], OutputActivation::Identity, &mut rng(1)).unwrap();
        let xs = vec![vec![0.1, 0.2], vec![-0.4, 1.0]];
        let ys: Vec<Vec<f64>> = xs.iter().map(|x| m.forward(x).unwrap()).collect();
        let (loss, g) = m.grad(&Batch::Regression { inputs: &xs, targets: &ys }).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.0.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn duplicated_sample_gives_same_gradient() {
        let m = Mlp::new(&[3, 4, 2], OutputActivation::Identity, &mut rng(2)).unwrap();
        let x = vec![vec![0.5, -0.2, 0.9]];
        let y = vec![vec![1.0, -1.0]];
        let (_, g1) = m.grad(&Batch::Regression { inputs: &x, targets: &y }).unwrap();
        let xk = vec![x[0].clone(); 5];
        let yk = vec![y[0].clone(); 5];
        let (_, gk) = m.grad(&Batch::Regression { inputs: &xk, targets: &yk }).unwrap();
        for (a, b) in g1.0.iter().zip(&gk.0) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn sgd_degenerate_steps_leave_params() {
        let mut m = Mlp::new(&[2, 2], OutputActivation::Identity, &mut rng(4)).unwrap();
        let before = m.params().to_vec();
        let g = Gradients(vec![0.5; m.param_count()]);
        m.sgd_step(&g, 0.0).unwrap();
        assert_eq!(m.params(), &before[..]);
        m.sgd_step(&Gradients::zeros_like(&m), 0.3).unwrap();
        assert_eq!(m.params(), &before[..]);
    }

    #[test]
    fn sgd_on_square_bowl() {
        // f(θ) = θ² through a 1-1 linear net with zero input: output = bias
        let mut m = Mlp::from_params(&[1, 1], OutputActivation::Identity, vec![0.0, 1.0]).unwrap();
        let xs = vec![vec![0.0]];
        let ys = vec![vec![0.0]];
        let (_, g) = m.grad(&Batch::Regression { inputs: &xs, targets: &ys }).unwrap();
        m.sgd_step(&g, 0.1).unwrap();
        assert!((m.params()[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn sgd_rejects_nan() {
        let mut m = Mlp::zeros(&[1, 1], OutputActivation::Identity).unwrap();
        let g = Gradients(vec![f64::NAN, 0.0]);
        assert!(matches!(m.sgd_step(&g, 0.1), Err(Error::NonFinite(_))));
    }

    #[test]
    fn model_file_round_trip() {
        let m = Mlp::new(&[3, 4, 2], OutputActivation::Softmax, &mut rng(9)).unwrap();
        let norm = Standardizer::fit(&[vec![1.0, 2.0, 3.0], vec![3.0, 2.0, 1.0]]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        m.save(&path, Some(&norm), BTreeMap::new()).unwrap();
        let file = ModelFile::load(&path).unwrap();
        assert_eq!(file.to_mlp().unwrap(), m);
        assert_eq!(file.input_norm.unwrap(), norm);
    }

    #[test]
    fn standardizer_constant_column() {
        let s = Standardizer::fit(&[vec![1.0, 5.0], vec![3.0, 5.0]]).unwrap();
        assert_eq!(s.apply(&[2.0, 5.0]), vec![0.0, 0.0]);
    }
}
