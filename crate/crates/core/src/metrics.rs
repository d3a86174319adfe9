//! Accuracy assessment: confusion counts against reference labels, F-score,
//! the presence-background criterion F_pb, OA, kappa, PA, UA,
//! commission/omission and multi-trial summaries.
//!
//! The target class is always the positive class. Metrics with a zero
//! denominator evaluate to 0 and carry a `degenerate` flag so search
//! objectives stay totally ordered.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::data::ConfusionCounts;
use crate::error::{param, Result};

/// A metric value plus whether its denominator vanished.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub value: f64,
    pub degenerate: bool,
}

impl Metric {
    fn ratio(num: f64, den: f64) -> Self {
        if den > 0.0 {
            Self { value: num / den, degenerate: false }
        } else {
            Self { value: 0.0, degenerate: true }
        }
    }
}

pub fn confusion_from_predictions(reference: &[bool], predicted: &[bool]) -> Result<ConfusionCounts> {
    if reference.len() != predicted.len() {
        return param(format!("{} reference labels but {} predictions", reference.len(), predicted.len()));
    }
    if reference.is_empty() {
        return param("confusion matrix needs at least one sample");
    }
    let mut c = ConfusionCounts::new(0.0, 0.0, 0.0, 0.0);
    for (&t, &p) in reference.iter().zip(predicted) {
        match (t, p) {
            (true, true) => c.tp += 1.0,
            (true, false) => c.fn_ += 1.0,
            (false, true) => c.fp += 1.0,
            (false, false) => c.tn += 1.0,
        }
    }
    Ok(c)
}

/// `2tp / (2tp + fn + fp)`.
pub fn f_score(c: &ConfusionCounts) -> Metric {
    Metric::ratio(2.0 * c.tp, 2.0 * c.tp + c.fn_ + c.fp)
}

pub fn overall_accuracy(c: &ConfusionCounts) -> Metric {
    Metric::ratio(c.tp + c.tn, c.total())
}

pub fn producer_accuracy(c: &ConfusionCounts) -> Metric {
    Metric::ratio(c.tp, c.tp + c.fn_)
}

pub fn user_accuracy(c: &ConfusionCounts) -> Metric {
    Metric::ratio(c.tp, c.tp + c.fp)
}

/// Cohen's kappa with chance agreement from the marginals.
pub fn kappa(c: &ConfusionCounts) -> Metric {
    let n = c.total();
    if n <= 0.0 {
        return Metric { value: 0.0, degenerate: true };
    }
    let po = (c.tp + c.tn) / n;
    let pe = ((c.tp + c.fp) * (c.tp + c.fn_) + (c.fn_ + c.tn) * (c.fp + c.tn)) / (n * n);
    if po == pe {
        // Covers constant predictions exactly, including pe = 1.
        return Metric { value: 0.0, degenerate: pe >= 1.0 };
    }
    Metric::ratio(po - pe, 1.0 - pe)
}

/// Predictions tallied against observed labels (`s`) instead of truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PbConfusion {
    /// s = 1, predicted presence.
    pub tp_prime: f64,
    /// s = 1, predicted absence.
    pub fn_prime: f64,
    /// s = 0, predicted presence.
    pub fp_prime: f64,
    /// s = 0, predicted absence.
    pub background_negative: f64,
}

pub fn pb_confusion_from_predictions(observed_positive: &[bool], predicted: &[bool]) -> Result<PbConfusion> {
    let c = confusion_from_predictions(observed_positive, predicted)?;
    Ok(PbConfusion { tp_prime: c.tp, fn_prime: c.fn_, fp_prime: c.fp, background_negative: c.tn })
}

/// `2TP' / (TP' + FN' + FP')`, taken literally, so it ranges over `[0, 2]`.
pub fn f_pb(c: &PbConfusion) -> Metric {
    Metric::ratio(2.0 * c.tp_prime, c.tp_prime + c.fn_prime + c.fp_prime)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessmentBundle {
    pub confusion: ConfusionCounts,
    pub f_score: f64,
    pub f_pb: Option<f64>,
    pub oa: f64,
    pub kappa: f64,
    pub pa: f64,
    pub ua: f64,
    pub commission: f64,
    pub omission: f64,
    /// Names of metrics whose denominator vanished.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub degenerate: Vec<String>,
}

/// Metric names accepted by [`AssessmentBundle::get`] and the summaries.
pub const METRIC_NAMES: [&str; 8] = ["f_score", "f_pb", "oa", "kappa", "pa", "ua", "commission", "omission"];

impl AssessmentBundle {
    pub fn from_confusion(confusion: ConfusionCounts, pb: Option<&PbConfusion>) -> Self {
        let mut degenerate = Vec::new();
        let mut take = |name: &str, m: Metric| {
            if m.degenerate {
                degenerate.push(name.to_string());
            }
            m.value
        };
        let f = take("f_score", f_score(&confusion));
        let f_pb = pb.map(|p| take("f_pb", f_pb(p)));
        let oa = take("oa", overall_accuracy(&confusion));
        let k = take("kappa", kappa(&confusion));
        let pa = take("pa", producer_accuracy(&confusion));
        let ua = take("ua", user_accuracy(&confusion));
        Self {
            confusion,
            f_score: f,
            f_pb,
            oa,
            kappa: k,
            pa,
            ua,
            commission: 1.0 - ua,
            omission: 1.0 - pa,
            degenerate,
        }
    }

    pub fn assess(reference: &[bool], predicted: &[bool], pb: Option<&PbConfusion>) -> Result<Self> {
        Ok(Self::from_confusion(confusion_from_predictions(reference, predicted)?, pb))
    }

    pub fn get(&self, metric: &str) -> Option<f64> {
        match metric {
            "f_score" => Some(self.f_score),
            "f_pb" => self.f_pb,
            "oa" => Some(self.oa),
            "kappa" => Some(self.kappa),
            "pa" => Some(self.pa),
            "ua" => Some(self.ua),
            "commission" => Some(self.commission),
            "omission" => Some(self.omission),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Inclusive linear-interpolation quantile of sorted data: position
/// `(n - 1) p`, interpolating between neighbours.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Sample standard deviation (`n - 1`), 0 for a single value.
pub fn summarize(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return param("cannot summarize an empty sample");
    }
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mean = s.iter().sum::<f64>() / n;
    let std = if s.len() > 1 {
        (s.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(Summary {
        mean,
        std,
        min: s[0],
        q1: quantile_sorted(&s, 0.25),
        median: quantile_sorted(&s, 0.5),
        q3: quantile_sorted(&s, 0.75),
        max: s[s.len() - 1],
    })
}

/// Per-metric summaries. `f_pb` is included only when some bundle has it,
/// and summarizes those bundles alone.
pub fn aggregate_trials(bundles: &[AssessmentBundle]) -> Result<BTreeMap<String, Summary>> {
    if bundles.is_empty() {
        return param("aggregation needs at least one bundle");
    }
    let mut out = BTreeMap::new();
    for name in METRIC_NAMES {
        let values: Vec<f64> = bundles.iter().filter_map(|b| b.get(name)).collect();
        if !values.is_empty() {
            out.insert(name.to_string(), summarize(&values)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn counting_example() {
        let c = confusion_from_predictions(&[true, true, false, false], &[true, false, false, true]).unwrap();
        assert_eq!((c.tp, c.fn_, c.fp, c.tn), (1.0, 1.0, 1.0, 1.0));
        assert!(confusion_from_predictions(&[true], &[true, false]).is_err());
    }

    #[test]
    fn published_row_pbl() {
        // Printed layout: (+,+)=0.8293 (+,-)=0.0328 (-,+)=0.0271 (-,-)=0.1108.
        let c = ConfusionCounts::new(0.1108, 0.0271, 0.0328, 0.8293);
        let b = AssessmentBundle::from_confusion(c, None);
        assert!(close(b.f_score, 0.7873, 5e-4));
        assert!(close(b.oa, 0.9401, 1e-3));
        assert!(close(b.kappa, 0.7524, 1e-3));
        assert!(close(b.pa, 0.7716, 1e-3));
        assert!(close(b.ua, 0.8036, 1e-3));
    }

    #[test]
    fn published_row_ocsvm() {
        let b = AssessmentBundle::from_confusion(ConfusionCounts::new(0.0929, 0.0305, 0.0507, 0.8259), None);
        for (got, want) in [(b.oa, 0.9188), (b.pa, 0.6472), (b.ua, 0.7527), (b.kappa, 0.6494), (b.f_score, 0.6960)] {
            assert!(close(got, want, 1e-3), "{got} vs {want}");
        }
    }

    #[test]
    fn degenerate_cases() {
        let none = ConfusionCounts::new(0.0, 0.0, 0.0, 5.0);
        let f = f_score(&none);
        assert_eq!(f, Metric { value: 0.0, degenerate: true });
        let b = AssessmentBundle::from_confusion(none, None);
        assert!(b.degenerate.contains(&"f_score".to_string()));
        assert_eq!(f_score(&ConfusionCounts::new(0.0, 2.0, 3.0, 1.0)).value, 0.0);
        assert_eq!(f_score(&ConfusionCounts::new(4.0, 0.0, 0.0, 4.0)).value, 1.0);
    }

    #[test]
    fn f_pb_literal() {
        let pb = |t, n, p| PbConfusion { tp_prime: t, fn_prime: n, fp_prime: p, background_negative: 0.0 };
        assert_eq!(f_pb(&pb(10.0, 0.0, 0.0)).value, 2.0);
        assert!(close(f_pb(&pb(10.0, 10.0, 10.0)).value, 2.0 / 3.0, 1e-12));
        assert_eq!(f_pb(&pb(0.0, 5.0, 0.0)).value, 0.0);
        assert!(f_pb(&pb(0.0, 0.0, 0.0)).degenerate);
    }

    #[test]
    fn perfect_predictions() {
        let truth = [true, false, true, false, false];
        let b = AssessmentBundle::assess(&truth, &truth, None).unwrap();
        assert_eq!((b.f_score, b.oa, b.pa, b.ua, b.kappa), (1.0, 1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn constant_predictions_give_zero_kappa() {
        let truth = [true, false, true, false, false, false, true];
        for p in [true, false] {
            let b = AssessmentBundle::assess(&truth, &[p; 7], None).unwrap();
            assert_eq!(b.kappa, 0.0);
        }
    }

    #[test]
    fn summary_examples() {
        let s = summarize(&[0.76, 0.77, 0.78, 0.79, 0.80]).unwrap();
        assert!(close(s.mean, 0.78, 1e-12) && close(s.median, 0.78, 1e-12));
        assert!(close(s.q1, 0.77, 1e-12) && close(s.q3, 0.79, 1e-12));
        let one = summarize(&[0.5]).unwrap();
        assert_eq!(one, Summary { mean: 0.5, std: 0.0, min: 0.5, q1: 0.5, median: 0.5, q3: 0.5, max: 0.5 });
        let q = summarize(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(close(q.q1, 1.75, 1e-12) && close(q.q3, 3.25, 1e-12));
        assert!(summarize(&[]).is_err());
    }

    #[test]
    fn aggregate_skips_missing_f_pb() {
        let b = AssessmentBundle::from_confusion(ConfusionCounts::new(3.0, 1.0, 1.0, 5.0), None);
        let agg = aggregate_trials(&[b.clone(), b]).unwrap();
        assert!(!agg.contains_key("f_pb"));
        assert_eq!(agg.len(), 7);
        assert!(aggregate_trials(&[]).is_err());
    }

    proptest! {
        #[test]
        fn scale_invariance(tp in 0u32..500, fp in 0u32..500, fn_ in 0u32..500, tn in 1u32..500) {
            let raw = ConfusionCounts::new(tp as f64, fp as f64, fn_ as f64, tn as f64);
            let a = AssessmentBundle::from_confusion(raw, None);
            let b = AssessmentBundle::from_confusion(raw.normalized(), None);
            for name in METRIC_NAMES.iter().filter(|n| **n != "f_pb") {
                prop_assert!(close(a.get(name).unwrap(), b.get(name).unwrap(), 1e-12));
            }
            prop_assert!(close(a.commission + a.ua, 1.0, 1e-12));
            prop_assert!(close(a.omission + a.pa, 1.0, 1e-12));
            prop_assert!((-1.0..=1.0).contains(&a.kappa));
        }
    }
}
