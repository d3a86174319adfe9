//! Samples, datasets and label states shared by every classifier.

use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fmt;

use crate::error::{Error, Result};

/// Object features, expected in `[0, 1]` after normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for FeatureVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// What the learner is allowed to see about a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observed {
    /// s = 1
    ObservedPositive,
    /// s = 0, unlabeled draw from the whole population
    Background,
    /// supervised negative, only for the binary baselines
    Negative,
}

/// Reference label from interpretation or a synthetic generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truth {
    Presence,
    Absence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelState {
    pub observed: Observed,
    pub truth: Option<Truth>,
}

impl LabelState {
    pub fn positive() -> Self {
        Self { observed: Observed::ObservedPositive, truth: None }
    }

    pub fn background() -> Self {
        Self { observed: Observed::Background, truth: None }
    }

    pub fn negative() -> Self {
        Self { observed: Observed::Negative, truth: None }
    }

    pub fn with_truth(mut self, truth: Truth) -> Self {
        self.truth = Some(truth);
        self
    }

    pub fn is_presence(&self) -> Option<bool> {
        self.truth.map(|t| t == Truth::Presence)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub features: FeatureVector,
    pub label: LabelState,
}

impl Sample {
    pub fn new(id: impl Into<String>, features: Vec<f64>, label: LabelState) -> Self {
        Self { id: id.into(), features: FeatureVector(features), label }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub feature_names: Vec<String>,
}

/// Which dataset rule a [`Violation`] breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    DuplicateId,
    Dimension,
    FeatureNames,
    NonFinite,
    Range,
    LabelConflict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub sample_id: Option<String>,
    pub rule: Rule,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.sample_id {
            Some(id) => write!(f, "{:?} (sample {id}): {}", self.rule, self.detail),
            None => write!(f, "{:?}: {}", self.rule, self.detail),
        }
    }
}

impl Dataset {
    pub fn new(feature_names: Vec<String>, samples: Vec<Sample>) -> Self {
        Self { samples, feature_names }
    }

    /// Empty dataset sharing this one's feature names.
    pub fn empty_like(&self) -> Self {
        Self { samples: Vec::new(), feature_names: self.feature_names.clone() }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Sample> {
        self.samples.iter()
    }

    /// Row-major copy of the feature values.
    pub fn feature_matrix(&self) -> Matrix {
        let cols = self.dim();
        let mut data = Vec::with_capacity(self.len() * cols);
        for s in &self.samples {
            data.extend_from_slice(&s.features.0);
        }
        Matrix { rows: self.len(), cols, data }
    }

    /// Reference labels; errors if any sample lacks ground truth.
    pub fn truth_vector(&self) -> Result<Vec<bool>> {
        self.samples
            .iter()
            .map(|s| {
                s.label.is_presence().ok_or_else(|| {
                    Error::Data(format!("sample {} has no ground truth", s.id))
                })
            })
            .collect()
    }

    pub fn observed_positive_mask(&self) -> Vec<bool> {
        self.samples
            .iter()
            .map(|s| s.label.observed == Observed::ObservedPositive)
            .collect()
    }

    /// Concatenation; both sides must share feature names.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if !self.feature_names.is_empty()
            && !other.feature_names.is_empty()
            && self.feature_names != other.feature_names
        {
            return Err(Error::Parameter("feature names differ between datasets".into()));
        }
        let names = if self.feature_names.is_empty() {
            other.feature_names.clone()
        } else {
            self.feature_names.clone()
        };
        let mut samples = self.samples.clone();
        samples.extend(other.samples.iter().cloned());
        Ok(Dataset { samples, feature_names: names })
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            feature_names: self.feature_names.clone(),
        }
    }
}

/// Checks every dataset invariant. `normalized` additionally enforces the
/// `[0, 1]` range on feature values.
pub fn validate_dataset(d: &Dataset, normalized: bool) -> Vec<Violation> {
    let mut out = Vec::new();
    let k = d.dim();
    if let Some(first) = d.samples.first() {
        if first.features.dim() != k {
            out.push(Violation {
                sample_id: None,
                rule: Rule::FeatureNames,
                detail: format!("{} feature names for {} features", k, first.features.dim()),
            });
        }
    }
    let mut seen = HashSet::new();
    for s in &d.samples {
        let id = Some(s.id.clone());
        if !seen.insert(s.id.as_str()) {
            out.push(Violation { sample_id: id.clone(), rule: Rule::DuplicateId, detail: "id repeated".into() });
        }
        if s.features.dim() != k {
            out.push(Violation {
                sample_id: id.clone(),
                rule: Rule::Dimension,
                detail: format!("expected {k} features, found {}", s.features.dim()),
            });
        }
        for (j, &v) in s.features.0.iter().enumerate() {
            if !v.is_finite() {
                out.push(Violation { sample_id: id.clone(), rule: Rule::NonFinite, detail: format!("feature {j} is {v}") });
            } else if normalized && !(0.0..=1.0).contains(&v) {
                out.push(Violation { sample_id: id.clone(), rule: Rule::Range, detail: format!("feature {j} = {v} outside [0, 1]") });
            }
        }
        if s.label.observed == Observed::ObservedPositive && s.label.truth == Some(Truth::Absence) {
            out.push(Violation {
                sample_id: id,
                rule: Rule::LabelConflict,
                detail: "observed positive with true absence".into(),
            });
        }
    }
    out
}

/// Splits by observed label, preserving order within each part.
pub fn partition_by_label(d: &Dataset) -> (Dataset, Dataset, Dataset) {
    let mut pos = d.empty_like();
    let mut bg = d.empty_like();
    let mut neg = d.empty_like();
    for s in &d.samples {
        match s.label.observed {
            Observed::ObservedPositive => pos.samples.push(s.clone()),
            Observed::Background => bg.samples.push(s.clone()),
            Observed::Negative => neg.samples.push(s.clone()),
        }
    }
    (pos, bg, neg)
}

/// Dense row-major matrix used by the numeric routines.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self { rows: rows.len(), cols, data }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    /// Stacks two matrices with equal column counts.
    pub fn vstack(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.cols);
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Matrix { rows: self.rows + other.rows, cols: self.cols, data }
    }
}

/// Counts (or proportions) of a binary confusion matrix; the positive class
/// is always the target class.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: f64,
    pub fp: f64,
    #[serde(rename = "fn")]
    pub fn_: f64,
    pub tn: f64,
}

impl ConfusionCounts {
    pub fn new(tp: f64, fp: f64, fn_: f64, tn: f64) -> Self {
        Self { tp, fp, fn_, tn }
    }

    pub fn total(&self) -> f64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Proportions summing to 1; a zero matrix stays zero.
    pub fn normalized(&self) -> Self {
        let n = self.total();
        if n <= 0.0 {
            return *self;
        }
        Self::new(self.tp / n, self.fp / n, self.fn_ / n, self.tn / n)
    }

    pub fn is_valid(&self) -> bool {
        [self.tp, self.fp, self.fn_, self.tn].iter().all(|v| v.is_finite() && *v >= 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(k: usize) -> Vec<String> {
        (1..=k).map(|i| format!("f{i}")).collect()
    }

    fn ds(labels: &[LabelState]) -> Dataset {
        let samples = labels
            .iter()
            .enumerate()
            .map(|(i, l)| Sample::new(format!("s{i}"), vec![0.1 * i as f64, 0.5], *l))
            .collect();
        Dataset::new(names(2), samples)
    }

    #[test]
    fn duplicate_id_reported_once() {
        let mut d = ds(&[LabelState::positive(), LabelState::background()]);
        d.samples[1].id = "a".into();
        d.samples[0].id = "a".into();
        let report = validate_dataset(&d, true);
        assert_eq!(report.len(), 1);
        assert_eq!(report[0].rule, Rule::DuplicateId);
    }

    #[test]
    fn well_formed_dataset_is_clean() {
        let d = ds(&[LabelState::positive(), LabelState::background(), LabelState::negative()]);
        assert!(validate_dataset(&d, true).is_empty());
    }

    #[test]
    fn out_of_range_value_flagged_when_normalized() {
        let mut d = ds(&[LabelState::background()]);
        d.samples[0].features.0[0] = 1.5;
        let report = validate_dataset(&d, true);
        assert_eq!(report.len(), 1);
        assert_eq!(report[0].rule, Rule::Range);
        assert_eq!(report[0].sample_id.as_deref(), Some("s0"));
        assert!(validate_dataset(&d, false).is_empty());
    }

    #[test]
    fn conflicting_label_flagged() {
        let d = ds(&[LabelState::positive().with_truth(Truth::Absence)]);
        assert_eq!(validate_dataset(&d, true)[0].rule, Rule::LabelConflict);
    }

    #[test]
    fn partition_counts() {
        let d = ds(&[
            LabelState::positive(),
            LabelState::background(),
            LabelState::negative(),
            LabelState::background(),
        ]);
        let (p, b, n) = partition_by_label(&d);
        assert_eq!((p.len(), b.len(), n.len()), (1, 2, 1));
        assert_eq!(b.samples[0].id, "s1");
        assert_eq!(b.samples[1].id, "s3");
    }

    #[test]
    fn partition_all_background() {
        let d = ds(&[LabelState::background(); 3]);
        let (p, b, n) = partition_by_label(&d);
        assert!(p.is_empty() && n.is_empty());
        assert_eq!(b, d);
    }

    #[test]
    fn confusion_normalization_sums_to_one() {
        let c = ConfusionCounts::new(3.0, 1.0, 2.0, 14.0).normalized();
        assert!((c.total() - 1.0).abs() < 1e-12);
        assert!(c.is_valid());
    }
}
