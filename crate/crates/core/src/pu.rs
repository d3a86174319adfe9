//! Presence-background (PBL) and positive-unlabeled (PUL) learning.
//!
//! A soft base classifier is trained to separate observed positives from
//! background, giving `P(s = 1 | x)`. The labeling constant `c` is the mean
//! base score over held-out observed positives, and the existence
//! probability `P(y = 1 | x)` is recovered as
//!
//! * PUL: `score / c`
//! * PBL: `((1 - c) / c) * score / (1 - score)`
//!
//! both clamped to `[0, 1]`. Objects are labeled presence when the corrected
//! probability is at least the threshold (0.5 by default).

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Observed};
use crate::error::{param, Error, Result};
use crate::ingest::holdout_split;
use crate::soft::{train_logistic, train_mlp, MlpConfig, TrainedSoftModel};

/// Lower clamp applied to the estimated labeling constant.
pub const C_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CMethod {
    MeanScoreOnPositives,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CEstimate {
    pub c: f64,
    pub n_validation_positives: usize,
    pub method: CMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PuVariant {
    Pul,
    Pbl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresenceLabel {
    Presence,
    Absence,
}

impl PresenceLabel {
    /// Ties go to presence.
    pub fn from_probability(p: f64, threshold: f64) -> Self {
        if p >= threshold {
            Self::Presence
        } else {
            Self::Absence
        }
    }

    pub fn is_presence(self) -> bool {
        self == Self::Presence
    }
}

/// Mean base score over validation positives, clamped to `[C_FLOOR, 1]`.
pub fn estimate_c(base: &TrainedSoftModel, validation_positives: &Dataset) -> Result<CEstimate> {
    if validation_positives.is_empty() {
        return param("c estimation needs at least one validation positive");
    }
    if let Some(s) = validation_positives.iter().find(|s| s.label.observed != Observed::ObservedPositive) {
        return param(format!("sample {} is not an observed positive", s.id));
    }
    let scores = base.predict_dataset(validation_positives)?;
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    Ok(CEstimate {
        c: mean.clamp(C_FLOOR, 1.0),
        n_validation_positives: scores.len(),
        method: CMethod::MeanScoreOnPositives,
    })
}

fn check_inputs(score: f64, c: f64) -> Result<()> {
    if !(c > 0.0 && c <= 1.0) {
        return param(format!("labeling constant {c} outside (0, 1]"));
    }
    if !(0.0..=1.0).contains(&score) {
        return param(format!("score {score} outside [0, 1]"));
    }
    Ok(())
}

pub fn correct_pul(score: f64, c: f64) -> Result<f64> {
    check_inputs(score, c)?;
    Ok((score / c).min(1.0))
}

/// Saturates to 1 at `score = 1`, where the odds are unbounded.
pub fn correct_pbl(score: f64, c: f64) -> Result<f64> {
    check_inputs(score, c)?;
    if score >= 1.0 {
        return Ok(1.0);
    }
    Ok(((1.0 - c) / c * score / (1.0 - score)).min(1.0))
}

pub fn correct(variant: PuVariant, score: f64, c: f64) -> Result<f64> {
    match variant {
        PuVariant::Pul => correct_pul(score, c),
        PuVariant::Pbl => correct_pbl(score, c),
    }
}

/// Soft learner used as the presence-vs-background base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseLearner {
    Mlp(MlpConfig),
    Logistic { l2_penalty: f64 },
}

impl Default for BaseLearner {
    fn default() -> Self {
        Self::Mlp(MlpConfig::default())
    }
}

impl BaseLearner {
    fn train(&self, data: &Dataset, targets: &[f64]) -> Result<TrainedSoftModel> {
        match self {
            Self::Mlp(cfg) => train_mlp(data, targets, cfg),
            Self::Logistic { l2_penalty } => train_logistic(data, targets, *l2_penalty),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PuModel {
    pub base: TrainedSoftModel,
    pub c_hat: CEstimate,
    pub variant: PuVariant,
    pub threshold: f64,
}

impl PuModel {
    pub fn new(base: TrainedSoftModel, c_hat: CEstimate, variant: PuVariant, threshold: f64) -> Result<Self> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return param(format!("threshold {threshold} outside (0, 1)"));
        }
        Ok(Self { base, c_hat, variant, threshold })
    }

    /// Same base and `c`, different correction.
    pub fn with_variant(&self, variant: PuVariant) -> Self {
        Self { variant, ..self.clone() }
    }

    pub fn probability(&self, x: &[f64]) -> Result<f64> {
        correct(self.variant, self.base.predict_score(x)?, self.c_hat.c)
    }

    pub fn probabilities(&self, d: &Dataset) -> Result<Vec<f64>> {
        self.base
            .predict_dataset(d)?
            .into_iter()
            .map(|s| correct(self.variant, s, self.c_hat.c))
            .collect()
    }
}

pub fn classify(m: &PuModel, x: &[f64]) -> Result<(f64, PresenceLabel)> {
    let p = m.probability(x)?;
    Ok((p, PresenceLabel::from_probability(p, m.threshold)))
}

/// Holds out `holdout_fraction` of positives and background (stratified),
/// fits the base on the rest (positives 1, background 0), and estimates `c`
/// on the held-out positives.
pub fn train_pu(
    pos: &Dataset,
    background: &Dataset,
    variant: PuVariant,
    learner: &BaseLearner,
    holdout_fraction: f64,
    seed: u64,
) -> Result<PuModel> {
    if pos.is_empty() || background.is_empty() {
        return param("PU training needs non-empty positive and background sets");
    }
    let mut training = pos.concat(background)?;
    for s in &mut training.samples[..pos.len()] {
        s.label.observed = Observed::ObservedPositive;
    }
    for s in &mut training.samples[pos.len()..] {
        s.label.observed = Observed::Background;
    }
    let (train_part, validation) = holdout_split(&training, holdout_fraction, seed)?;
    let targets: Vec<f64> = train_part
        .iter()
        .map(|s| if s.label.observed == Observed::ObservedPositive { 1.0 } else { 0.0 })
        .collect();
    if !targets.iter().any(|&t| t == 1.0) {
        return Err(Error::Parameter("no positives left after the holdout split".into()));
    }
    let base = learner.train(&train_part, &targets)?;
    let mut val_pos = validation.empty_like();
    val_pos.samples = validation
        .samples
        .into_iter()
        .filter(|s| s.label.observed == Observed::ObservedPositive)
        .collect();
    let c_hat = estimate_c(&base, &val_pos)?;
    PuModel::new(base, c_hat, variant, 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{LabelState, Sample};
    use crate::soft::{SoftParams, TrainingSummary, MODEL_FORMAT_VERSION};
    use proptest::prelude::*;

    fn constant_model(intercept: f64) -> TrainedSoftModel {
        TrainedSoftModel {
            version: MODEL_FORMAT_VERSION,
            input_dim: 1,
            params: SoftParams::Logistic { weights: vec![0.0], intercept },
            training_summary: TrainingSummary { final_loss: 0.0, epochs_run: 0, converged: true },
        }
    }

    fn positives(n: usize) -> Dataset {
        Dataset::new(
            vec!["f".into()],
            (0..n).map(|i| Sample::new(format!("p{i}"), vec![0.5], LabelState::positive())).collect(),
        )
    }

    #[test]
    fn c_from_mean_score() {
        // sigmoid(40) rounds to 1.0 in f64.
        assert_eq!(estimate_c(&constant_model(40.0), &positives(3)).unwrap().c, 1.0);
        assert!((estimate_c(&constant_model(0.0), &positives(2)).unwrap().c - 0.5).abs() < 1e-15);
        let tiny = estimate_c(&constant_model(-800.0), &positives(2)).unwrap();
        assert_eq!(tiny.c, C_FLOOR);
        assert!(estimate_c(&constant_model(0.0), &positives(0)).is_err());
        let mut mixed = positives(2);
        mixed.samples[1].label = LabelState::background();
        assert!(estimate_c(&constant_model(0.0), &mixed).is_err());
    }

    #[test]
    fn correction_examples() {
        assert_eq!(correct_pul(0.3, 1.0).unwrap(), 0.3);
        assert_eq!(correct_pul(0.5, 0.5).unwrap(), 1.0);
        assert_eq!(correct_pbl(0.0, 0.3).unwrap(), 0.0);
        assert_eq!(correct_pbl(0.5, 0.5).unwrap(), 1.0);
        assert_eq!(correct_pbl(1.0, 0.3).unwrap(), 1.0);
        assert!(correct_pul(0.5, 0.0).is_err());
        assert!(correct_pbl(0.5, -1.0).is_err());
    }

    #[test]
    fn threshold_tie_goes_to_presence() {
        assert_eq!(PresenceLabel::from_probability(0.5, 0.5), PresenceLabel::Presence);
        assert_eq!(PresenceLabel::from_probability(0.49, 0.5), PresenceLabel::Absence);
        let c = CEstimate { c: 1.0, n_validation_positives: 1, method: CMethod::MeanScoreOnPositives };
        let m = PuModel::new(constant_model(0.0), c, PuVariant::Pul, 0.5).unwrap();
        assert_eq!(classify(&m, &[0.1]).unwrap(), (0.5, PresenceLabel::Presence));
    }

    #[test]
    fn empty_background_rejected() {
        let p = positives(4);
        assert!(matches!(
            train_pu(&p, &p.empty_like(), PuVariant::Pbl, &BaseLearner::Logistic { l2_penalty: 0.0 }, 0.25, 0),
            Err(Error::Parameter(_))
        ));
    }

    proptest! {
        #[test]
        fn corrections_monotone_and_bounded(a in 0.0f64..1.0, b in 0.0f64..1.0, c in 0.01f64..=1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            for v in [PuVariant::Pul, PuVariant::Pbl] {
                let pl = correct(v, lo, c).unwrap();
                let ph = correct(v, hi, c).unwrap();
                prop_assert!(pl <= ph);
                prop_assert!((0.0..=1.0).contains(&pl) && (0.0..=1.0).contains(&ph));
            }
            prop_assert_eq!(correct_pul(a, 1.0).unwrap(), a);
        }

        #[test]
        fn both_corrections_saturate_at_c(c in 0.01f64..0.99) {
            prop_assert!((correct_pul(c, c).unwrap() - 1.0).abs() < 1e-12);
            prop_assert!((correct_pbl(c, c).unwrap() - 1.0).abs() < 1e-12);
        }
    }
}
