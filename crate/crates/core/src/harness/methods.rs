//! Method recipes: JSON-configurable hyperparameters, optional tuning, and
//! the trained-model union used by the benchmark and the CLI.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::{Dataset, Observed};
use crate::error::{param, Result};
use crate::ingest::{holdout_split, TrainingDraw};
use crate::maxent::{train_maxent, MaxentConfig};
use crate::metrics::{confusion_from_predictions, f_score};
use crate::pu::{train_pu, BaseLearner, PuModel, PuVariant};
use crate::rng::derive_seed;
use crate::soft::{positive_targets, train_mlp, MlpConfig, TrainedSoftModel};
use crate::svm::{train_bsvm, train_csvc, train_ocsvm, SvmModel};
use crate::tuning::{
    grid_search, objective_fpb, pso_optimize, Axis, Classifier, Evaluation, GridSpec, PsoConfig, TuneResult,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodName {
    Pbl,
    Pul,
    Maxent,
    Ocsvm,
    Bsvm,
    Ann,
    Svm,
}

impl MethodName {
    pub fn label(self) -> &'static str {
        match self {
            Self::Pbl => "PBL",
            Self::Pul => "PUL",
            Self::Maxent => "MAXENT",
            Self::Ocsvm => "OCSVM",
            Self::Bsvm => "BSVM",
            Self::Ann => "ANN",
            Self::Svm => "SVM",
        }
    }

    /// Binary baselines train on positives and negatives.
    pub fn is_binary(self) -> bool {
        matches!(self, Self::Ann | Self::Svm)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TunerSpec {
    Grid(GridSpec),
    Pso(PsoConfig),
}

impl TunerSpec {
    /// Default grid per method, or `None` for methods without SVM
    /// hyperparameters. The one-class SVM has no penalty, so its
    /// `[2^-10, 2^10]` range is searched over the kernel width instead.
    pub fn default_grid(name: MethodName) -> Option<Self> {
        let axes = match name {
            MethodName::Ocsvm => vec![Axis::nu(), Axis::penalty("gamma")],
            MethodName::Bsvm => vec![Axis::penalty("c_plus"), Axis::penalty("c_minus")],
            MethodName::Svm => vec![Axis::penalty("c"), Axis::penalty("gamma")],
            _ => return None,
        };
        Some(Self::Grid(GridSpec { axes }))
    }
}

/// One entry of the experiment's method list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub name: MethodName,
    /// Report label; defaults to the upper-case method name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub params: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tuner: Option<TunerSpec>,
}

impl MethodSpec {
    pub fn new(name: MethodName) -> Self {
        Self { name, label: None, params: Value::Null, tuner: None }
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.name.label().to_string())
    }

    pub fn resolve(&self) -> Result<MethodParams> {
        fn parse<T: serde::de::DeserializeOwned>(v: &Value) -> Result<T> {
            let v = if v.is_null() { Value::Object(Default::default()) } else { v.clone() };
            Ok(serde_json::from_value(v)?)
        }
        Ok(match self.name {
            MethodName::Pbl | MethodName::Pul => MethodParams::Pu(parse(&self.params)?),
            MethodName::Maxent => MethodParams::Maxent(parse(&self.params)?),
            MethodName::Ocsvm => MethodParams::Ocsvm(parse(&self.params)?),
            MethodName::Bsvm => MethodParams::Bsvm(parse(&self.params)?),
            MethodName::Ann => MethodParams::Ann(parse(&self.params)?),
            MethodName::Svm => MethodParams::Svm(parse(&self.params)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PuParams {
    pub base: BaseLearner,
    pub holdout_fraction: f64,
}

impl Default for PuParams {
    fn default() -> Self {
        Self { base: BaseLearner::default(), holdout_fraction: 0.25 }
    }
}

/// `gamma: None` means `1 / K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OcsvmParams {
    pub nu: f64,
    pub gamma: Option<f64>,
}

impl Default for OcsvmParams {
    fn default() -> Self {
        Self { nu: 0.1, gamma: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BsvmParams {
    pub c_plus: f64,
    pub c_minus: f64,
    pub gamma: Option<f64>,
}

impl Default for BsvmParams {
    fn default() -> Self {
        Self { c_plus: 1.0, c_minus: 1.0, gamma: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmParams {
    pub c: f64,
    pub gamma: Option<f64>,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self { c: 1.0, gamma: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MethodParams {
    Pu(PuParams),
    Maxent(MaxentConfig),
    Ocsvm(OcsvmParams),
    Bsvm(BsvmParams),
    Ann(MlpConfig),
    Svm(SvmParams),
}

impl MethodParams {
    /// Overrides one hyperparameter by its tuning-axis name.
    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        match (self, name) {
            (Self::Ocsvm(p), "nu") => p.nu = value,
            (Self::Ocsvm(p), "gamma") => p.gamma = Some(value),
            (Self::Bsvm(p), "c_plus") => p.c_plus = value,
            (Self::Bsvm(p), "c_minus") => p.c_minus = value,
            (Self::Bsvm(p), "gamma") => p.gamma = Some(value),
            (Self::Svm(p), "c") => p.c = value,
            (Self::Svm(p), "gamma") => p.gamma = Some(value),
            (Self::Maxent(m), "regularization") => m.regularization = value,
            (Self::Ann(m), "l2_penalty") => m.l2_penalty = value,
            (Self::Pu(p), "l2_penalty") => match &mut p.base {
                BaseLearner::Mlp(m) => m.l2_penalty = value,
                BaseLearner::Logistic { l2_penalty } => *l2_penalty = value,
            },
            (_, other) => return param(format!("parameter {other:?} cannot be tuned for this method")),
        }
        Ok(())
    }
}

/// A trained model of any method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum SavedModel {
    Pu(PuModel),
    Soft { soft: TrainedSoftModel, threshold: f64 },
    Svm(SvmModel),
}

impl Classifier for SavedModel {
    fn predict_presence(&self, d: &Dataset) -> Result<Vec<bool>> {
        match self {
            Self::Pu(m) => m.predict_presence(d),
            Self::Svm(m) => m.predict_presence(d),
            Self::Soft { soft, threshold } => {
                Ok(soft.predict_dataset(d)?.into_iter().map(|s| s >= *threshold).collect())
            }
        }
    }
}

impl SavedModel {
    /// Per-object score: corrected probability, soft score or SVM decision value.
    pub fn scores(&self, d: &Dataset) -> Result<Vec<f64>> {
        match self {
            Self::Pu(m) => m.probabilities(d),
            Self::Soft { soft, .. } => soft.predict_dataset(d),
            Self::Svm(m) => m.decision_values(&d.feature_matrix()),
        }
    }

    /// Deterministic training diagnostics for reports.
    pub fn details(&self) -> Value {
        match self {
            Self::Pu(m) => serde_json::json!({
                "c_hat": m.c_hat.c,
                "n_validation_positives": m.c_hat.n_validation_positives,
                "base_loss": m.base.training_summary.final_loss,
                "base_converged": m.base.training_summary.converged,
            }),
            Self::Soft { soft, .. } => serde_json::json!({
                "final_loss": soft.training_summary.final_loss,
                "iterations": soft.training_summary.epochs_run,
                "converged": soft.training_summary.converged,
            }),
            Self::Svm(m) => serde_json::json!({
                "n_support": m.support_vectors.len(),
                "iterations": m.diagnostics.iterations,
                "max_violation": m.diagnostics.max_violation,
            }),
        }
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}

fn gamma_or_default(g: Option<f64>, dim: usize) -> f64 {
    g.unwrap_or(1.0 / dim.max(1) as f64)
}

fn select(d: &Dataset, observed: Observed) -> Dataset {
    let mut out = d.empty_like();
    out.samples = d.iter().filter(|s| s.label.observed == observed).cloned().collect();
    out
}

/// Trains one method on a trial's draw. `seed` feeds every stochastic step;
/// PBL and PUL with equal parameters and seed produce the same base model.
pub fn train_method(name: MethodName, params: &MethodParams, draw: &TrainingDraw, seed: u64, threshold: f64) -> Result<SavedModel> {
    let dim = draw.positives.dim();
    match (name, params) {
        (MethodName::Pbl | MethodName::Pul, MethodParams::Pu(p)) => {
            let variant = if name == MethodName::Pbl { PuVariant::Pbl } else { PuVariant::Pul };
            let mut base = p.base.clone();
            if let BaseLearner::Mlp(m) = &mut base {
                m.seed = derive_seed(seed, &[1]);
            }
            let model = train_pu(&draw.positives, &draw.background, variant, &base, p.holdout_fraction, derive_seed(seed, &[0]))?;
            Ok(SavedModel::Pu(PuModel::new(model.base, model.c_hat, variant, threshold)?))
        }
        (MethodName::Maxent, MethodParams::Maxent(cfg)) => {
            Ok(SavedModel::Soft { soft: train_maxent(&draw.positives, &draw.background, cfg)?, threshold })
        }
        (MethodName::Ocsvm, MethodParams::Ocsvm(p)) => {
            Ok(SavedModel::Svm(train_ocsvm(&draw.positives, p.nu, gamma_or_default(p.gamma, dim))?))
        }
        (MethodName::Bsvm, MethodParams::Bsvm(p)) => Ok(SavedModel::Svm(train_bsvm(
            &draw.positives,
            &draw.background,
            p.c_plus,
            p.c_minus,
            gamma_or_default(p.gamma, dim),
        )?)),
        (MethodName::Ann, MethodParams::Ann(cfg)) => {
            if draw.negatives.is_empty() {
                return param("ANN baseline needs negatives (sampling.n_negative > 0)");
            }
            let data = draw.positives.concat(&draw.negatives)?;
            let mut cfg = cfg.clone();
            cfg.seed = derive_seed(seed, &[1]);
            Ok(SavedModel::Soft { soft: train_mlp(&data, &positive_targets(&data), &cfg)?, threshold })
        }
        (MethodName::Svm, MethodParams::Svm(p)) => {
            if draw.negatives.is_empty() {
                return param("SVM baseline needs negatives (sampling.n_negative > 0)");
            }
            Ok(SavedModel::Svm(train_csvc(&draw.positives, &draw.negatives, p.c, gamma_or_default(p.gamma, dim))?))
        }
        _ => param(format!("parameters do not match method {}", name.label())),
    }
}

/// Searches hyperparameters on a stratified holdout of the draw and returns
/// the tuned parameters. One-class methods maximize F_pb over validation
/// positives and background; binary baselines maximize F over validation
/// positives and negatives.
pub fn tune_method(
    name: MethodName,
    params: &MethodParams,
    tuner: &TunerSpec,
    draw: &TrainingDraw,
    seed: u64,
    threshold: f64,
) -> Result<(MethodParams, TuneResult)> {
    let binary = name.is_binary();
    let other = if binary { &draw.negatives } else { &draw.background };
    let pool = draw.positives.concat(other)?;
    let (train_part, validation) = holdout_split(&pool, 0.25, derive_seed(seed, &[0]))?;
    let other_kind = if binary { Observed::Negative } else { Observed::Background };
    let sub_draw = TrainingDraw {
        positives: select(&train_part, Observed::ObservedPositive),
        background: if binary { draw.background.empty_like() } else { select(&train_part, other_kind) },
        negatives: if binary { select(&train_part, other_kind) } else { draw.negatives.empty_like() },
    };
    let names: Vec<String> = match tuner {
        TunerSpec::Grid(g) => g.axes.iter().map(|a| a.name.clone()).collect(),
        TunerSpec::Pso(p) => p.bounds.iter().map(|a| a.name.clone()).collect(),
    };
    // Reject unknown axes before spending any evaluations.
    let mut probe = params.clone();
    for n in &names {
        probe.set(n, 1.0)?;
    }
    let fit_seed = derive_seed(seed, &[1]);
    let objective = |point: &[f64]| -> Evaluation {
        let mut p = params.clone();
        for (n, v) in names.iter().zip(point) {
            if let Err(e) = p.set(n, *v) {
                return Evaluation::failed(e.to_string());
            }
        }
        if binary {
            let run = || -> Result<f64> {
                let m = train_method(name, &p, &sub_draw, fit_seed, threshold)?;
                let truth: Vec<bool> = validation.iter().map(|s| s.label.observed == Observed::ObservedPositive).collect();
                Ok(f_score(&confusion_from_predictions(&truth, &m.predict_presence(&validation)?)?).value)
            };
            run().into()
        } else {
            objective_fpb(|_| train_method(name, &p, &sub_draw, fit_seed, threshold), &train_part, &validation)
        }
    };
    let result = match tuner {
        TunerSpec::Grid(g) => grid_search(objective, g)?,
        TunerSpec::Pso(cfg) => {
            let mut cfg = cfg.clone();
            cfg.seed = derive_seed(seed, &[2]);
            pso_optimize(objective, &cfg)?
        }
    };
    let mut tuned = params.clone();
    for (n, v) in result.param_names.iter().zip(&result.best_params) {
        tuned.set(n, *v)?;
    }
    Ok((tuned, result))
}
