//! Linear max-margin classifier trained by mini-batch subgradient descent
//! on the L2-regularized hinge loss. Its weight vector is what the
//! aggregation protocol averages.

use crate::data::{Label, LabeledExample, FEATURE_COUNT};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("training diverged at epoch {epoch}")]
    NumericalDivergence { epoch: usize },
    #[error("weight dimension mismatch: {expected} vs {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("no training data")]
    EmptyData,
}

/// Weight vector plus bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelWeights {
    pub w: Vec<f64>,
    pub b: f64,
}

impl ModelWeights {
    pub fn zeros(dim: usize) -> Self {
        Self { w: vec![0.0; dim], b: 0.0 }
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn is_finite(&self) -> bool {
        self.b.is_finite() && self.w.iter().all(|x| x.is_finite())
    }

    /// `w.x + b`
    pub fn margin(&self, x: &[f64]) -> f64 {
        self.w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.b
    }

    /// Bytes on the wire: 8-byte reals for every weight plus the bias.
    pub fn payload_bytes(&self) -> u32 {
        (self.dim() * 8 + 8) as u32
    }
}

impl Default for ModelWeights {
    fn default() -> Self {
        Self::zeros(FEATURE_COUNT)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2_lambda: f64,
    pub batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 5, learning_rate: 0.01, l2_lambda: 0.001, batch_size: 16 }
    }
}

impl TrainConfig {
    pub fn violations(&self) -> Vec<(String, String)> {
        let mut v = Vec::new();
        if self.epochs == 0 {
            v.push(("training.epochs".into(), "must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            v.push(("training.learning_rate".into(), format!("must be positive, got {}", self.learning_rate)));
        }
        if !(self.l2_lambda.is_finite() && self.l2_lambda >= 0.0) {
            v.push(("training.l2_lambda".into(), format!("must be non-negative, got {}", self.l2_lambda)));
        }
        if self.batch_size == 0 {
            v.push(("training.batch_size".into(), "must be positive".into()));
        }
        v
    }
}

/// `lambda * |w|^2 + mean(max(0, 1 - y (w.x + b)))`
pub fn hinge_loss(m: &ModelWeights, data: &[LabeledExample], lambda: f64) -> f64 {
    let reg = lambda * m.w.iter().map(|x| x * x).sum::<f64>();
    let hinge = data.iter().map(|e| (1.0 - e.label.sign() * m.margin(&e.features)).max(0.0)).sum::<f64>();
    reg + hinge / data.len() as f64
}

/// Subgradient of [`hinge_loss`] with respect to `(w, b)`; the hinge term
/// contributes nothing at margin exactly 1.
pub fn hinge_subgradient(m: &ModelWeights, data: &[&LabeledExample], lambda: f64) -> ModelWeights {
    let mut g = ModelWeights { w: m.w.iter().map(|x| 2.0 * lambda * x).collect(), b: 0.0 };
    let scale = 1.0 / data.len() as f64;
    for e in data {
        let y = e.label.sign();
        if y * m.margin(&e.features) < 1.0 {
            for (gi, xi) in g.w.iter_mut().zip(e.features.iter()) {
                *gi -= scale * y * xi;
            }
            g.b -= scale * y;
        }
    }
    g
}

/// Runs `cfg.epochs` shuffled mini-batch passes from `start` with step size
/// `learning_rate / sqrt(t)` at step `t = 1, 2, ...`.
pub fn train_local(
    start: &ModelWeights,
    data: &[LabeledExample],
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<ModelWeights, ModelError> {
    let mut m = start.clone();
    if cfg.epochs == 0 {
        return Ok(m);
    }
    if data.is_empty() {
        return Err(ModelError::EmptyData);
    }
    let batch = cfg.batch_size.max(1);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut step = 0u64;
    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(batch) {
            step += 1;
            let examples: Vec<&LabeledExample> = chunk.iter().map(|&i| &data[i]).collect();
            let g = hinge_subgradient(&m, &examples, cfg.l2_lambda);
            let lr = cfg.learning_rate / (step as f64).sqrt();
            for (wi, gi) in m.w.iter_mut().zip(&g.w) {
                *wi -= lr * gi;
            }
            m.b -= lr * g.b;
        }
        if !m.is_finite() || !hinge_loss(&m, data, cfg.l2_lambda).is_finite() {
            return Err(ModelError::NumericalDivergence { epoch });
        }
    }
    Ok(m)
}

/// Malignant when `w.x + b >= 0`.
pub fn predict(m: &ModelWeights, x: &[f64]) -> Label {
    if m.margin(x) >= 0.0 {
        Label::Malignant
    } else {
        Label::Benign
    }
}

/// Binary confusion counts with malignant as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn record(&mut self, predicted: Label, actual: Label) {
        match (predicted, actual) {
            (Label::Malignant, Label::Malignant) => self.tp += 1,
            (Label::Malignant, Label::Benign) => self.fp += 1,
            (Label::Benign, Label::Malignant) => self.fn_ += 1,
            (Label::Benign, Label::Benign) => self.tn += 1,
        }
    }

    pub fn metrics(&self) -> Metrics {
        let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(self.tp, self.tp + self.fp);
        let recall = ratio(self.tp, self.tp + self.fn_);
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        Metrics { accuracy: ratio(self.tp + self.tn, self.tp + self.fp + self.fn_ + self.tn), precision, recall, f1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn evaluate<'a>(m: &ModelWeights, data: impl IntoIterator<Item = &'a LabeledExample>) -> Metrics {
    let mut c = Confusion::default();
    for e in data {
        c.record(predict(m, &e.features), e.label);
    }
    c.metrics()
}
