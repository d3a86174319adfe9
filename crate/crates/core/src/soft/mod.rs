//! Soft probabilistic classifiers producing scores in `[0, 1]`.
//!
//! [`TrainedSoftModel`] is the common carrier for the MLP ensemble, plain
//! logistic regression and the approximate maxent model. Models serialize to
//! JSON; `serde_json` writes the shortest decimal that parses back to the
//! same `f64`, so reloaded models reproduce scores bit for bit.

mod logistic;
mod mlp;

pub use logistic::{logistic_loss_grad, sigmoid, train_logistic, train_logistic_matrix};
pub use mlp::{gradient_check, gradient_check_with_targets, train_mlp, train_mlp_matrix, MlpConfig, Network};

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::data::{Dataset, Matrix, Observed, Truth};
use crate::error::{param, Error, Result};
use crate::maxent::FeatureExpansion;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SoftKind {
    MlpEnsemble,
    Logistic,
    Maxent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SoftParams {
    MlpEnsemble {
        /// Layer widths from input to the single output unit.
        sizes: Vec<usize>,
        /// Flat parameter vector per member, see [`Network`].
        members: Vec<Vec<f64>>,
        seeds: Vec<u64>,
    },
    Logistic {
        weights: Vec<f64>,
        intercept: f64,
    },
    Maxent {
        expansion: FeatureExpansion,
        weights: Vec<f64>,
        intercept: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub final_loss: f64,
    pub epochs_run: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedSoftModel {
    pub version: u32,
    pub input_dim: usize,
    pub params: SoftParams,
    pub training_summary: TrainingSummary,
}

impl TrainedSoftModel {
    pub fn kind(&self) -> SoftKind {
        match self.params {
            SoftParams::MlpEnsemble { .. } => SoftKind::MlpEnsemble,
            SoftParams::Logistic { .. } => SoftKind::Logistic,
            SoftParams::Maxent { .. } => SoftKind::Maxent,
        }
    }

    /// `P(s = 1 | x)` in `[0, 1]`.
    pub fn predict_score(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.input_dim {
            return param(format!("expected {} features, got {}", self.input_dim, x.len()));
        }
        Ok(self.score_unchecked(x))
    }

    fn score_unchecked(&self, x: &[f64]) -> f64 {
        match &self.params {
            SoftParams::MlpEnsemble { sizes, members, .. } => {
                let scores: Vec<f64> = members
                    .iter()
                    .map(|p| sigmoid(Network::new(sizes, p).logit(x)))
                    .collect();
                ensemble_mean(&scores)
            }
            SoftParams::Logistic { weights, intercept } => {
                sigmoid(intercept + weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            }
            SoftParams::Maxent { expansion, weights, intercept } => {
                let z = expansion.expand(x);
                sigmoid(intercept + weights.iter().zip(&z).map(|(w, v)| w * v).sum::<f64>())
            }
        }
    }

    pub fn predict_matrix(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.cols != self.input_dim {
            return param(format!("expected {} features, got {}", self.input_dim, x.cols));
        }
        Ok(x.iter_rows().map(|r| self.score_unchecked(r)).collect())
    }

    pub fn predict_dataset(&self, d: &Dataset) -> Result<Vec<f64>> {
        self.predict_matrix(&d.feature_matrix())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let model: Self = serde_json::from_slice(&std::fs::read(path)?)?;
        if model.version != MODEL_FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported model version {}", model.version)));
        }
        Ok(model)
    }
}

/// Arithmetic mean of member scores.
pub fn ensemble_mean(scores: &[f64]) -> f64 {
    scores.iter().sum::<f64>() / scores.len() as f64
}

/// 1 for samples that are observed positives or true presences, else 0.
pub fn positive_targets(d: &Dataset) -> Vec<f64> {
    d.samples
        .iter()
        .map(|s| {
            let pos = s.label.observed == Observed::ObservedPositive || s.label.truth == Some(Truth::Presence);
            if pos { 1.0 } else { 0.0 }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ensemble_mean_of_members() {
        assert!((ensemble_mean(&[0.2, 0.4, 0.6, 0.8, 1.0]) - 0.6).abs() < 1e-15);
    }

    #[test]
    fn zero_network_scores_half() {
        let sizes = vec![3, 10, 1];
        let n = Network::param_count(&sizes);
        let model = TrainedSoftModel {
            version: MODEL_FORMAT_VERSION,
            input_dim: 3,
            params: SoftParams::MlpEnsemble { sizes, members: vec![vec![0.0; n]; 2], seeds: vec![0, 1] },
            training_summary: TrainingSummary { final_loss: 0.0, epochs_run: 0, converged: false },
        };
        assert_eq!(model.predict_score(&[0.3, 0.1, 0.9]).unwrap(), 0.5);
        assert!(model.predict_score(&[0.3]).is_err());
    }
}
