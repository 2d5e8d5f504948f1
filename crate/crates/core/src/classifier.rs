//! Single-hidden-layer backpropagation network.
//!
//! Both layers use the logistic sigmoid, the loss is `E = ½ Σ (y - t)²`, and
//! training is online gradient descent with momentum. Weights are stored
//! row-major with the bias in the last column of each row:
//! `w1` is `hidden x (input + 1)` and `w2` is `output x (hidden + 1)`.
//!
//! All randomness comes from ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded with
//! `seed_from_u64`: initialization draws from stream 0 of `seed`, per-epoch
//! shuffling from stream 1 of the training seed. ChaCha8 output is fixed
//! across platforms, so a given seed reproduces bit-for-bit.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const MODEL_MAGIC: &[u8; 8] = b"NONMLP01";

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("network dimensions must be at least 1, got {input}-{hidden}-{output}")]
    ZeroDimension {
        input: usize,
        hidden: usize,
        output: usize,
    },
    #[error("{what} has length {found}, expected {expected}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("training diverged (non-finite loss) in epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("malformed model file: {0}")]
    BadModel(String),
    #[error("model I/O: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Training stops once an epoch's mean squared error falls below this.
    pub target_mse: f64,
    /// Seeds the per-epoch sample shuffling.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 300,
            learning_rate: 0.1,
            momentum: 0.9,
            target_mse: 1e-3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        if self.max_epochs < 1 {
            return Err(ClassifierError::InvalidConfig("max_epochs must be ≥ 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ClassifierError::InvalidConfig(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(ClassifierError::InvalidConfig(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.target_mse.is_nan() || self.target_mse < 0.0 {
            return Err(ClassifierError::InvalidConfig(format!(
                "target MSE must be nonnegative, got {}",
                self.target_mse
            )));
        }
        Ok(())
    }
}

/// A training pair: scaled features and a target vector in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: Vec<f64>,
    pub target: Vec<f64>,
}

/// `n`-dimensional 0/1 vector with a single 1 at `class`.
pub fn one_hot(class: usize, n: usize) -> Vec<f64> {
    let mut t = vec![0.0; n];
    t[class] = 1.0;
    t
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Activations {
    pub hidden: Vec<f64>,
    pub output: Vec<f64>,
}

/// Gradient of `E` with respect to every weight, same layout as the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: Vec<f64>,
    pub w2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean squared error per epoch, measured during the pass.
    pub mse_history: Vec<f64>,
}

impl TrainReport {
    pub fn epochs(&self) -> usize {
        self.mse_history.len()
    }

    pub fn final_mse(&self) -> f64 {
        self.mse_history.last().copied().unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpClassifier {
    input_dim: usize,
    hidden_dim: usize,
    output_dim: usize,
    seed: u64,
    w1: Vec<f64>,
    w2: Vec<f64>,
}

impl MlpClassifier {
    /// Draws every weight and bias i.i.d. uniform on `[-1, 1]`.
    pub fn new(
        input_dim: usize,
        hidden_dim: usize,
        output_dim: usize,
        seed: u64,
    ) -> Result<Self, ClassifierError> {
        check_dims(input_dim, hidden_dim, output_dim)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |len: usize| -> Vec<f64> {
            (0..len).map(|_| rng.random_range(-1.0..=1.0)).collect()
        };
        let w1 = draw(hidden_dim * (input_dim + 1));
        let w2 = draw(output_dim * (hidden_dim + 1));
        Ok(Self {
            input_dim,
            hidden_dim,
            output_dim,
            seed,
            w1,
            w2,
        })
    }

    pub fn from_weights(
        input_dim: usize,
        hidden_dim: usize,
        output_dim: usize,
        seed: u64,
        w1: Vec<f64>,
        w2: Vec<f64>,
    ) -> Result<Self, ClassifierError> {
        check_dims(input_dim, hidden_dim, output_dim)?;
        expect_len("w1", hidden_dim * (input_dim + 1), w1.len())?;
        expect_len("w2", output_dim * (hidden_dim + 1), w2.len())?;
        if w1.iter().chain(&w2).any(|w| !w.is_finite()) {
            return Err(ClassifierError::BadModel("non-finite weight".into()));
        }
        Ok(Self {
            input_dim,
            hidden_dim,
            output_dim,
            seed,
            w1,
            w2,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn w1(&self) -> &[f64] {
        &self.w1
    }

    pub fn w2(&self) -> &[f64] {
        &self.w2
    }

    fn forward_into(&self, x: &[f64], hidden: &mut [f64], output: &mut [f64]) {
        let stride1 = self.input_dim + 1;
        for (j, h) in hidden.iter_mut().enumerate() {
            let row = &self.w1[j * stride1..(j + 1) * stride1];
            let z: f64 = row[..self.input_dim].iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
                + row[self.input_dim];
            *h = sigmoid(z);
        }
        let stride2 = self.hidden_dim + 1;
        for (k, y) in output.iter_mut().enumerate() {
            let row = &self.w2[k * stride2..(k + 1) * stride2];
            let z: f64 = row[..self.hidden_dim]
                .iter()
                .zip(hidden.iter())
                .map(|(w, h)| w * h)
                .sum::<f64>()
                + row[self.hidden_dim];
            *y = sigmoid(z);
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Activations, ClassifierError> {
        expect_len("input", self.input_dim, x.len())?;
        let mut hidden = vec![0.0; self.hidden_dim];
        let mut output = vec![0.0; self.output_dim];
        self.forward_into(x, &mut hidden, &mut output);
        Ok(Activations { hidden, output })
    }

    /// Index of the largest output; ties go to the lowest index.
    pub fn predict(&self, x: &[f64]) -> Result<usize, ClassifierError> {
        Ok(argmax(&self.forward(x)?.output))
    }

    /// `E = ½ Σ (y - t)²` for one sample.
    pub fn loss(&self, x: &[f64], target: &[f64]) -> Result<f64, ClassifierError> {
        expect_len("target", self.output_dim, target.len())?;
        let act = self.forward(x)?;
        Ok(0.5 * act.output.iter().zip(target).map(|(y, t)| (y - t) * (y - t)).sum::<f64>())
    }

    /// Backpropagated gradient of the per-sample loss.
    pub fn gradients(&self, x: &[f64], target: &[f64]) -> Result<Gradients, ClassifierError> {
        expect_len("target", self.output_dim, target.len())?;
        let act = self.forward(x)?;
        let mut ws = Workspace::new(self);
        ws.hidden.copy_from_slice(&act.hidden);
        ws.output.copy_from_slice(&act.output);
        self.backprop(x, target, &mut ws);
        let mut g = Gradients {
            w1: vec![0.0; self.w1.len()],
            w2: vec![0.0; self.w2.len()],
        };
        self.for_each_grad(x, &ws, |layer, idx, grad| match layer {
            Layer::Hidden => g.w1[idx] = grad,
            Layer::Output => g.w2[idx] = grad,
        });
        Ok(g)
    }

    // fills ws.delta_out and ws.delta_hidden from ws.hidden / ws.output
    fn backprop(&self, _x: &[f64], target: &[f64], ws: &mut Workspace) {
        for ((d, &y), &t) in ws.delta_out.iter_mut().zip(&ws.output).zip(target) {
            *d = (y - t) * y * (1.0 - y);
        }
        let stride2 = self.hidden_dim + 1;
        for (j, d) in ws.delta_hidden.iter_mut().enumerate() {
            let back: f64 = ws
                .delta_out
                .iter()
                .enumerate()
                .map(|(k, dk)| self.w2[k * stride2 + j] * dk)
                .sum();
            let h = ws.hidden[j];
            *d = h * (1.0 - h) * back;
        }
    }

    fn for_each_grad(&self, x: &[f64], ws: &Workspace, mut f: impl FnMut(Layer, usize, f64)) {
        let stride1 = self.input_dim + 1;
        for (j, &dj) in ws.delta_hidden.iter().enumerate() {
            for (i, &xi) in x.iter().enumerate() {
                f(Layer::Hidden, j * stride1 + i, dj * xi);
            }
            f(Layer::Hidden, j * stride1 + self.input_dim, dj);
        }
        let stride2 = self.hidden_dim + 1;
        for (k, &dk) in ws.delta_out.iter().enumerate() {
            for (j, &hj) in ws.hidden.iter().enumerate() {
                f(Layer::Output, k * stride2 + j, dk * hj);
            }
            f(Layer::Output, k * stride2 + self.hidden_dim, dk);
        }
    }

    /// Online backpropagation with momentum. Samples are reshuffled every
    /// epoch; training stops after `max_epochs` or once the epoch MSE drops
    /// below `target_mse`.
    pub fn train(
        &mut self,
        samples: &[Sample],
        cfg: &TrainConfig,
    ) -> Result<TrainReport, ClassifierError> {
        cfg.validate()?;
        if samples.is_empty() {
            return Err(ClassifierError::EmptyTrainingSet);
        }
        for s in samples {
            expect_len("input", self.input_dim, s.input.len())?;
            expect_len("target", self.output_dim, s.target.len())?;
        }

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(1);
        let mut order: Vec<usize> = (0..samples.len()).collect();
        let mut ws = Workspace::new(self);
        let mut v1 = vec![0.0; self.w1.len()];
        let mut v2 = vec![0.0; self.w2.len()];
        let mut history = Vec::with_capacity(cfg.max_epochs);
        let norm = (samples.len() * self.output_dim) as f64;

        for epoch in 1..=cfg.max_epochs {
            order.shuffle(&mut rng);
            let mut sq_err = 0.0;
            for &idx in &order {
                let s = &samples[idx];
                self.forward_into(&s.input, &mut ws.hidden, &mut ws.output);
                sq_err += ws
                    .output
                    .iter()
                    .zip(&s.target)
                    .map(|(y, t)| (y - t) * (y - t))
                    .sum::<f64>();
                self.backprop(&s.input, &s.target, &mut ws);

                let (lr, mu) = (cfg.learning_rate, cfg.momentum);
                let stride1 = self.input_dim + 1;
                for (j, &dj) in ws.delta_hidden.iter().enumerate() {
                    let base = j * stride1;
                    let (w, v) = (&mut self.w1[base..base + stride1], &mut v1[base..base + stride1]);
                    for ((wi, vi), &xi) in w.iter_mut().zip(v.iter_mut()).zip(&s.input) {
                        *vi = mu * *vi - lr * dj * xi;
                        *wi += *vi;
                    }
                    let b = self.input_dim;
                    v[b] = mu * v[b] - lr * dj;
                    w[b] += v[b];
                }
                let stride2 = self.hidden_dim + 1;
                for (k, &dk) in ws.delta_out.iter().enumerate() {
                    let base = k * stride2;
                    let (w, v) = (&mut self.w2[base..base + stride2], &mut v2[base..base + stride2]);
                    for ((wj, vj), &hj) in w.iter_mut().zip(v.iter_mut()).zip(&ws.hidden) {
                        *vj = mu * *vj - lr * dk * hj;
                        *wj += *vj;
                    }
                    let b = self.hidden_dim;
                    v[b] = mu * v[b] - lr * dk;
                    w[b] += v[b];
                }
            }
            let mse = sq_err / norm;
            if !mse.is_finite() {
                return Err(ClassifierError::Diverged { epoch });
            }
            history.push(mse);
            if mse < cfg.target_mse {
                break;
            }
        }
        Ok(TrainReport {
            mse_history: history,
        })
    }

    /// Flat little-endian encoding: magic, four u64 header fields
    /// (input, hidden, output, seed), then `w1` and `w2` as f64.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 32 + 8 * (self.w1.len() + self.w2.len()));
        out.extend_from_slice(MODEL_MAGIC);
        for v in [
            self.input_dim as u64,
            self.hidden_dim as u64,
            self.output_dim as u64,
            self.seed,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for w in self.w1.iter().chain(&self.w2) {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ClassifierError> {
        let bad = |m: &str| ClassifierError::BadModel(m.to_string());
        if bytes.len() < 40 || &bytes[..8] != MODEL_MAGIC {
            return Err(bad("missing NONMLP01 header"));
        }
        let word = |i: usize| u64::from_le_bytes(bytes[8 + i * 8..16 + i * 8].try_into().unwrap());
        let dim = |i: usize| usize::try_from(word(i)).map_err(|_| bad("dimension overflow"));
        let (input, hidden, output) = (dim(0)?, dim(1)?, dim(2)?);
        let seed = word(3);
        check_dims(input, hidden, output)?;
        let n1 = hidden
            .checked_mul(input + 1)
            .ok_or_else(|| bad("dimension overflow"))?;
        let n2 = output
            .checked_mul(hidden + 1)
            .ok_or_else(|| bad("dimension overflow"))?;
        let body = &bytes[40..];
        if body.len() != 8 * (n1 + n2) {
            return Err(bad(&format!(
                "expected {} weight bytes, found {}",
                8 * (n1 + n2),
                body.len()
            )));
        }
        let mut weights = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let w1 = weights.by_ref().take(n1).collect();
        let w2 = weights.collect();
        Self::from_weights(input, hidden, output, seed, w1, w2)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ClassifierError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ClassifierError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

#[derive(Clone, Copy)]
enum Layer {
    Hidden,
    Output,
}

impl Layer {
    fn weight_mut(self, m: &mut MlpClassifier, idx: usize) -> &mut f64 {
        match self {
            Layer::Hidden => &mut m.w1[idx],
            Layer::Output => &mut m.w2[idx],
        }
    }
}

struct Workspace {
    hidden: Vec<f64>,
    output: Vec<f64>,
    delta_hidden: Vec<f64>,
    delta_out: Vec<f64>,
}

impl Workspace {
    fn new(m: &MlpClassifier) -> Self {
        Self {
            hidden: vec![0.0; m.hidden_dim],
            output: vec![0.0; m.output_dim],
            delta_hidden: vec![0.0; m.hidden_dim],
            delta_out: vec![0.0; m.output_dim],
        }
    }
}

fn check_dims(input: usize, hidden: usize, output: usize) -> Result<(), ClassifierError> {
    if input == 0 || hidden == 0 || output == 0 {
        return Err(ClassifierError::ZeroDimension {
            input,
            hidden,
            output,
        });
    }
    Ok(())
}

fn expect_len(what: &'static str, expected: usize, found: usize) -> Result<(), ClassifierError> {
    if expected != found {
        return Err(ClassifierError::DimensionMismatch {
            what,
            expected,
            found,
        });
    }
    Ok(())
}

/// First index of the maximum value.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

const FD_STEP: f64 = 1e-5;

/// Largest `|analytic - numeric| / max(1, |numeric|)` over all weights, with
/// the numeric gradient from central differences of the per-sample loss.
pub fn compare_gradients(
    mlp: &MlpClassifier,
    x: &[f64],
    target: &[f64],
    analytic: &Gradients,
) -> Result<f64, ClassifierError> {
    expect_len("w1 gradient", mlp.w1.len(), analytic.w1.len())?;
    expect_len("w2 gradient", mlp.w2.len(), analytic.w2.len())?;
    let mut probe = mlp.clone();
    let mut worst: f64 = 0.0;
    for layer in [Layer::Hidden, Layer::Output] {
        let len = match layer {
            Layer::Hidden => mlp.w1.len(),
            Layer::Output => mlp.w2.len(),
        };
        for idx in 0..len {
            let orig = *layer.weight_mut(&mut probe, idx);
            *layer.weight_mut(&mut probe, idx) = orig + FD_STEP;
            let plus = probe.loss(x, target)?;
            *layer.weight_mut(&mut probe, idx) = orig - FD_STEP;
            let minus = probe.loss(x, target)?;
            *layer.weight_mut(&mut probe, idx) = orig;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let a = match layer {
                Layer::Hidden => analytic.w1[idx],
                Layer::Output => analytic.w2[idx],
            };
            worst = worst.max((a - numeric).abs() / numeric.abs().max(1.0));
        }
    }
    Ok(worst)
}

/// Checks [`MlpClassifier::gradients`] against central finite differences.
pub fn gradient_check(
    mlp: &MlpClassifier,
    x: &[f64],
    target: &[f64],
) -> Result<f64, ClassifierError> {
    let analytic = mlp.gradients(x, target)?;
    compare_gradients(mlp, x, target, &analytic)
}
