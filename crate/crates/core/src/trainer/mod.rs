//! Loss, Adam, and the minibatch training loop with early stopping.

mod adam;
mod train;

pub use adam::{adam_step, clip_global_norm, AdamConfig, AdamState};
pub use train::{train, validation_metrics, CheckpointSink, EpochRecord, TrainOutcome, ValidationMetrics};

use serde::{Deserialize, Serialize};

use crate::autodiff::softplus;
use crate::corpus::EncodedDocument;
use crate::error::{Error, Result};
use crate::metrics::top_k_indices;
use crate::model::{predict_proba, ModelConfig, ModelParams, ParamKind, Variant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StopMetric {
    #[default]
    MicroF1,
    PrecisionAtK,
}

impl std::str::FromStr for StopMetric {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "micro_f1" => Ok(StopMetric::MicroF1),
            "precision_at_k" => Ok(StopMetric::PrecisionAtK),
            other => Err(format!(
                "unknown metric {other:?} (expected micro_f1 or precision_at_k)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub l2_lambda: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub early_stop_metric: StopMetric,
    /// k for [`StopMetric::PrecisionAtK`].
    pub k: usize,
    /// Global gradient-norm ceiling; 0 disables clipping.
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            l2_lambda: 1e-4,
            max_epochs: 30,
            patience: 5,
            early_stop_metric: StopMetric::MicroF1,
            k: 1,
            clip_norm: 5.0,
            seed: 1,
        }
    }
}

impl TrainConfig {
    /// Defaults with the variant's batch size (128 for HAN, else 32).
    pub fn for_variant(variant: Variant) -> Self {
        Self {
            batch_size: if variant == Variant::Han { 128 } else { 32 },
            ..Self::default()
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if self.patience == 0 {
            return Err(Error::config("patience", "must be at least 1"));
        }
        if self.max_epochs == 0 {
            return Err(Error::config("max_epochs", "must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", "must be positive"));
        }
        for (field, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::config(field, "must lie in [0, 1)"));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::config("epsilon", "must be positive"));
        }
        if !(self.l2_lambda >= 0.0) {
            return Err(Error::config("l2_lambda", "must be non-negative"));
        }
        if !(self.clip_norm >= 0.0) {
            return Err(Error::config("clip_norm", "must be non-negative"));
        }
        if self.k == 0 {
            return Err(Error::config("k", "must be at least 1"));
        }
        Ok(())
    }
}

/// Summed binary cross-entropy from pre-sigmoid scores, row by row.
pub fn bce_loss(logits: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<f64> {
    if logits.len() != targets.len() || logits.iter().zip(targets).any(|(z, y)| z.len() != y.len()) {
        return Err(Error::Mismatch("bce_loss: logits and targets differ in shape".into()));
    }
    Ok(logits
        .iter()
        .zip(targets)
        .flat_map(|(z, y)| z.iter().zip(y).map(|(&z, &y)| softplus(z) - y * z))
        .sum())
}

/// `λ Σ ‖W‖²` over weight matrices; biases and word embeddings are exempt.
pub fn l2_penalty(params: &ModelParams, lambda: f64) -> f64 {
    lambda
        * params
            .entries()
            .iter()
            .filter(|(_, kind, _)| *kind == ParamKind::Weight)
            .map(|(_, _, t)| t.sum_squares())
            .sum::<f64>()
}

/// Adds `∂/∂θ` of [`l2_penalty`], `2λW`, to gradients in entries order.
pub fn add_l2_gradient(params: &ModelParams, lambda: f64, grads: &mut [Vec<f64>]) {
    if lambda == 0.0 {
        return;
    }
    for ((_, kind, t), g) in params.entries().iter().zip(grads.iter_mut()) {
        if *kind == ParamKind::Weight {
            for (gi, &w) in g.iter_mut().zip(t.data()) {
                *gi += 2.0 * lambda * w;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// Label indices with `p > threshold`, ascending.
    pub labels: Vec<usize>,
    pub probabilities: Vec<f64>,
}

impl Prediction {
    pub fn from_probabilities(probabilities: Vec<f64>, threshold: f64) -> Self {
        let labels = (0..probabilities.len())
            .filter(|&l| probabilities[l] > threshold)
            .collect();
        Self { labels, probabilities }
    }

    /// The `k` best-scored labels.
    pub fn top_k(&self, k: usize) -> Vec<usize> {
        top_k_indices(&self.probabilities, k)
    }
}

pub fn predict(
    doc: &EncodedDocument,
    params: &ModelParams,
    config: &ModelConfig,
    threshold: f64,
) -> Result<Prediction> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::config("threshold", "must lie strictly between 0 and 1"));
    }
    Ok(Prediction::from_probabilities(
        predict_proba(doc, params, config)?,
        threshold,
    ))
}
