//! CSV ingestion, min-max normalization and the training-set sampling protocol.
//!
//! Dataset files are UTF-8 CSV with header `id,f1,...,fK,label`. Label codes
//! are `1`, `0` and `-1`; their meaning depends on [`LabelMode`].

use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use crate::data::{Dataset, LabelState, Observed, Sample, Truth};
use crate::error::{param, Error, Result};
use crate::rng::SeededRng;

/// How the label column of a dataset CSV is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    /// `1` observed positive, `0` negative, `-1` background.
    #[default]
    Observed,
    /// `1` true presence, `0` true absence, `-1` unknown; every sample is
    /// background from the learner's point of view.
    Truth,
}

pub fn read_csv<R: Read>(reader: R, mode: LabelMode) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() < 2 || &headers[0] != "id" || &headers[headers.len() - 1] != "label" {
        return Err(Error::Format("header must be `id,<features...>,label`".into()));
    }
    let feature_names: Vec<String> =
        headers.iter().skip(1).take(headers.len() - 2).map(str::to_owned).collect();
    let k = feature_names.len();
    let mut samples = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        // Header is line 1.
        let line = row + 2;
        let record = record.map_err(|e| Error::Parse { line, message: e.to_string() })?;
        if record.len() != k + 2 {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", k + 2, record.len()),
            });
        }
        let mut features = Vec::with_capacity(k);
        for j in 0..k {
            let raw = record[j + 1].trim();
            let v: f64 = raw.parse().map_err(|_| Error::Parse {
                line,
                message: format!("feature `{}` is not numeric: {raw:?}", feature_names[j]),
            })?;
            features.push(v);
        }
        let code = record[k + 1].trim();
        let label = decode_label(code, mode)
            .ok_or_else(|| Error::Format(format!("line {line}: unknown label code {code:?}")))?;
        samples.push(Sample::new(record[0].to_owned(), features, label));
    }
    Ok(Dataset::new(feature_names, samples))
}

fn decode_label(code: &str, mode: LabelMode) -> Option<LabelState> {
    let code: i32 = code.parse().ok()?;
    match (mode, code) {
        (LabelMode::Observed, 1) => Some(LabelState::positive()),
        (LabelMode::Observed, 0) => Some(LabelState::negative()),
        (LabelMode::Observed, -1) => Some(LabelState::background()),
        (LabelMode::Truth, 1) => Some(LabelState::background().with_truth(Truth::Presence)),
        (LabelMode::Truth, 0) => Some(LabelState::background().with_truth(Truth::Absence)),
        (LabelMode::Truth, -1) => Some(LabelState::background()),
        _ => None,
    }
}

fn encode_label(label: &LabelState, mode: LabelMode) -> i32 {
    match mode {
        LabelMode::Observed => match label.observed {
            Observed::ObservedPositive => 1,
            Observed::Negative => 0,
            Observed::Background => -1,
        },
        LabelMode::Truth => match label.truth {
            Some(Truth::Presence) => 1,
            Some(Truth::Absence) => 0,
            None => -1,
        },
    }
}

pub fn load_csv(path: impl AsRef<Path>, mode: LabelMode) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    read_csv(std::io::BufReader::new(file), mode)
}

pub fn write_csv<W: Write>(d: &Dataset, writer: W, mode: LabelMode) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["id".to_owned()];
    header.extend(d.feature_names.iter().cloned());
    header.push("label".into());
    w.write_record(&header)?;
    for s in &d.samples {
        let mut rec = Vec::with_capacity(d.dim() + 2);
        rec.push(s.id.clone());
        // `{}` prints the shortest representation that parses back exactly.
        rec.extend(s.features.0.iter().map(|v| format!("{v}")));
        rec.push(encode_label(&s.label, mode).to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv(d: &Dataset, path: impl AsRef<Path>, mode: LabelMode) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_csv(d, std::io::BufWriter::new(file), mode)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRange {
    pub feature: String,
    pub min: f64,
    pub max: f64,
}

/// Per-feature `(min, max)` recorded by [`min_max_normalize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct NormalizationTable {
    pub ranges: Vec<FeatureRange>,
}

impl NormalizationTable {
    /// Maps one raw vector into normalized coordinates. Constant features map to 0.
    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.ranges)
            .map(|(&v, r)| {
                let span = r.max - r.min;
                if span > 0.0 {
                    (v - r.min) / span
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Inverse of [`normalize`](Self::normalize) for non-constant features.
    pub fn denormalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.ranges).map(|(&v, r)| r.min + v * (r.max - r.min)).collect()
    }

    pub fn apply(&self, d: &Dataset) -> Result<Dataset> {
        if d.dim() != self.ranges.len() {
            return param(format!(
                "table has {} features, dataset has {}",
                self.ranges.len(),
                d.dim()
            ));
        }
        let mut out = d.clone();
        for s in &mut out.samples {
            check_finite(s)?;
            s.features.0 = self.normalize(&s.features.0);
        }
        Ok(out)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["feature", "min", "max"])?;
        for r in &self.ranges {
            w.write_record([r.feature.clone(), format!("{}", r.min), format!("{}", r.max)])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut ranges = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let line = row + 2;
            let rec = rec.map_err(|e| Error::Parse { line, message: e.to_string() })?;
            if rec.len() != 3 {
                return Err(Error::Parse { line, message: "expected feature,min,max".into() });
            }
            let num = |s: &str| {
                s.trim().parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    message: format!("not numeric: {s:?}"),
                })
            };
            ranges.push(FeatureRange { feature: rec[0].to_owned(), min: num(&rec[1])?, max: num(&rec[2])? });
        }
        Ok(Self { ranges })
    }
}

fn check_finite(s: &Sample) -> Result<()> {
    if let Some(v) = s.features.0.iter().find(|v| !v.is_finite()) {
        return Err(Error::Data(format!("sample {} has non-finite value {v}", s.id)));
    }
    Ok(())
}

/// Rescales every feature to `[0, 1]` and returns the table that reproduces
/// the transform on new data.
pub fn min_max_normalize(d: &Dataset) -> Result<(Dataset, NormalizationTable)> {
    let k = d.dim();
    let mut mins = vec![f64::INFINITY; k];
    let mut maxs = vec![f64::NEG_INFINITY; k];
    for s in &d.samples {
        check_finite(s)?;
        if s.features.dim() != k {
            return Err(Error::Data(format!("sample {} has {} features, expected {k}", s.id, s.features.dim())));
        }
        for (j, &v) in s.features.0.iter().enumerate() {
            mins[j] = mins[j].min(v);
            maxs[j] = maxs[j].max(v);
        }
    }
    let ranges = d
        .feature_names
        .iter()
        .enumerate()
        .map(|(j, name)| FeatureRange {
            feature: name.clone(),
            min: if d.is_empty() { 0.0 } else { mins[j] },
            max: if d.is_empty() { 0.0 } else { maxs[j] },
        })
        .collect();
    let table = NormalizationTable { ranges };
    let out = table.apply(d)?;
    Ok((out, table))
}

/// Sizes of the per-trial training draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    #[serde(default = "SamplingPlan::default_positive")]
    pub n_positive: usize,
    #[serde(default = "SamplingPlan::default_background")]
    pub n_background: usize,
    /// Zero skips the negative draw (one-class-only experiments).
    #[serde(default = "SamplingPlan::default_negative")]
    pub n_negative: usize,
    #[serde(default = "SamplingPlan::default_trials")]
    pub n_trials: usize,
    #[serde(default)]
    pub seed: u64,
    /// Keep drawn positives out of the background pool.
    #[serde(default)]
    pub exclude_observed_positives: bool,
}

impl SamplingPlan {
    fn default_positive() -> usize {
        1_000
    }
    fn default_background() -> usize {
        15_000
    }
    fn default_negative() -> usize {
        15_000
    }
    fn default_trials() -> usize {
        10
    }
}

impl Default for SamplingPlan {
    fn default() -> Self {
        Self {
            n_positive: 1_000,
            n_background: 15_000,
            n_negative: 15_000,
            n_trials: 10,
            seed: 0,
            exclude_observed_positives: false,
        }
    }
}

/// One trial's training material.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingDraw {
    pub positives: Dataset,
    pub background: Dataset,
    pub negatives: Dataset,
}

const STREAM_POSITIVE: u64 = 1;
const STREAM_BACKGROUND: u64 = 2;
const STREAM_NEGATIVE: u64 = 3;

/// Draws positives, background and negatives for `trial`. Each draw uses
/// its own stream derived from `(plan.seed, trial)`.
pub fn draw_training_sets(d: &Dataset, plan: &SamplingPlan, trial: usize) -> Result<TrainingDraw> {
    if trial >= plan.n_trials {
        return param(format!("trial {trial} out of range (n_trials = {})", plan.n_trials));
    }
    if plan.n_positive == 0 || plan.n_background == 0 {
        return param("n_positive and n_background must be positive");
    }
    let truth = d.truth_vector()?;
    let presences: Vec<usize> = (0..d.len()).filter(|&i| truth[i]).collect();
    let absences: Vec<usize> = (0..d.len()).filter(|&i| !truth[i]).collect();
    if plan.n_positive > presences.len() {
        return Err(Error::Sampling(format!(
            "requested {} positives, only {} presences available",
            plan.n_positive,
            presences.len()
        )));
    }
    if plan.n_negative > absences.len() {
        return Err(Error::Sampling(format!(
            "requested {} negatives, only {} absences available",
            plan.n_negative,
            absences.len()
        )));
    }
    let t = trial as u64;
    let pick = |pool: &[usize], k: usize, stream: u64| -> Vec<usize> {
        let mut rng = SeededRng::stream(plan.seed, &[t, stream]);
        rng.sample_indices(pool.len(), k).into_iter().map(|i| pool[i]).collect()
    };

    let pos_idx = pick(&presences, plan.n_positive, STREAM_POSITIVE);
    let bg_pool: Vec<usize> = if plan.exclude_observed_positives {
        let taken: HashSet<usize> = pos_idx.iter().copied().collect();
        (0..d.len()).filter(|i| !taken.contains(i)).collect()
    } else {
        (0..d.len()).collect()
    };
    if plan.n_background > bg_pool.len() {
        return Err(Error::Sampling(format!(
            "requested {} background samples, pool has {}",
            plan.n_background,
            bg_pool.len()
        )));
    }
    let bg_idx = pick(&bg_pool, plan.n_background, STREAM_BACKGROUND);
    let neg_idx = pick(&absences, plan.n_negative, STREAM_NEGATIVE);

    let relabel = |idx: &[usize], label: LabelState| {
        let mut out = d.subset(idx);
        for s in &mut out.samples {
            s.label = label;
        }
        out
    };
    Ok(TrainingDraw {
        positives: relabel(&pos_idx, LabelState::positive().with_truth(Truth::Presence)),
        background: relabel(&bg_idx, LabelState::background()),
        negatives: relabel(&neg_idx, LabelState::negative().with_truth(Truth::Absence)),
    })
}

/// Stratified holdout: `round(fraction * N)` samples go to validation,
/// apportioned across observed-label strata by largest remainder.
pub fn holdout_split(d: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return param(format!("holdout fraction {fraction} outside (0, 1)"));
    }
    if d.is_empty() {
        return param("cannot split an empty dataset");
    }
    let strata_order = [Observed::ObservedPositive, Observed::Background, Observed::Negative];
    let strata: Vec<Vec<usize>> = strata_order
        .iter()
        .map(|o| (0..d.len()).filter(|&i| d.samples[i].label.observed == *o).collect())
        .collect();

    let target = (fraction * d.len() as f64).round() as usize;
    let ideal: Vec<f64> = strata.iter().map(|s| fraction * s.len() as f64).collect();
    let mut take: Vec<usize> = ideal.iter().map(|v| v.floor() as usize).collect();
    let mut remaining = target.saturating_sub(take.iter().sum());
    let mut order: Vec<usize> = (0..strata.len()).collect();
    // Largest fractional remainder first; stable sort keeps stratum order on ties.
    order.sort_by(|&a, &b| {
        let ra = ideal[a] - ideal[a].floor();
        let rb = ideal[b] - ideal[b].floor();
        rb.partial_cmp(&ra).unwrap()
    });
    for &s in order.iter().cycle().take(order.len() * 2) {
        if remaining == 0 {
            break;
        }
        if take[s] < strata[s].len() {
            take[s] += 1;
            remaining -= 1;
        }
    }

    let mut in_validation = vec![false; d.len()];
    for (s, members) in strata.iter().enumerate() {
        let mut rng = SeededRng::stream(seed, &[s as u64]);
        for i in rng.sample_indices(members.len(), take[s]) {
            in_validation[members[i]] = true;
        }
    }
    let mut train = d.empty_like();
    let mut validation = d.empty_like();
    for (s, &v) in d.samples.iter().zip(&in_validation) {
        if v {
            validation.samples.push(s.clone());
        } else {
            train.samples.push(s.clone());
        }
    }
    Ok((train, validation))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::partition_by_label;

    fn names(k: usize) -> Vec<String> {
        (1..=k).map(|i| format!("f{i}")).collect()
    }

    #[test]
    fn reads_three_label_codes() {
        let text = "id,f1,f2,label\na,0.1,0.2,1\nb,0.3,0.4,0\nc,0.5,0.6,-1\n";
        let d = read_csv(text.as_bytes(), LabelMode::Observed).unwrap();
        let (p, b, n) = partition_by_label(&d);
        assert_eq!((p.len(), n.len(), b.len()), (1, 1, 1));
        assert_eq!(d.feature_names, vec!["f1", "f2"]);
    }

    #[test]
    fn header_only_file_is_empty() {
        let d = read_csv("id,f1,label\n".as_bytes(), LabelMode::Observed).unwrap();
        assert!(d.is_empty());
        assert_eq!(d.dim(), 1);
    }

    #[test]
    fn truth_mode_hides_labels_from_learner() {
        let text = "id,f1,label\na,0.1,1\nb,0.3,0\n";
        let d = read_csv(text.as_bytes(), LabelMode::Truth).unwrap();
        assert_eq!(d.samples[0].label.observed, Observed::Background);
        assert_eq!(d.truth_vector().unwrap(), vec![true, false]);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let err = read_csv("id,f1,label\na,0.1,1\nb,xx,0\n".as_bytes(), LabelMode::Observed).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = read_csv("id,f1,label\na,0.1\n".as_bytes(), LabelMode::Observed).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = read_csv("id,f1,label\na,0.1,7\n".as_bytes(), LabelMode::Observed).unwrap_err();
        assert!(matches!(err, Error::Format(_)), "{err}");
    }

    #[test]
    fn normalize_linear_and_constant_columns() {
        let samples = vec![
            Sample::new("a", vec![2.0, 3.0], LabelState::background()),
            Sample::new("b", vec![4.0, 3.0], LabelState::background()),
            Sample::new("c", vec![6.0, 3.0], LabelState::background()),
        ];
        let d = Dataset::new(names(2), samples);
        let (n, table) = min_max_normalize(&d).unwrap();
        let col0: Vec<f64> = n.samples.iter().map(|s| s.features.0[0]).collect();
        let col1: Vec<f64> = n.samples.iter().map(|s| s.features.0[1]).collect();
        assert_eq!(col0, vec![0.0, 0.5, 1.0]);
        assert_eq!(col1, vec![0.0, 0.0, 0.0]);
        assert_eq!(table.ranges[0], FeatureRange { feature: "f1".into(), min: 2.0, max: 6.0 });
    }

    #[test]
    fn normalize_rejects_non_finite() {
        let d = Dataset::new(names(1), vec![Sample::new("a", vec![f64::NAN], LabelState::background())]);
        assert!(matches!(min_max_normalize(&d), Err(Error::Data(_))));
    }

    #[test]
    fn random_matrix_normalizes_to_unit_columns() {
        let mut rng = SeededRng::new(5);
        let samples = (0..100)
            .map(|i| Sample::new(format!("s{i}"), (0..5).map(|_| rng.normal() * 10.0 + 3.0).collect(), LabelState::background()))
            .collect();
        let (n, _) = min_max_normalize(&Dataset::new(names(5), samples)).unwrap();
        for j in 0..5 {
            let col: Vec<f64> = n.samples.iter().map(|s| s.features.0[j]).collect();
            assert!(col.iter().all(|v| (0.0..=1.0).contains(v)));
            assert_eq!(col.iter().cloned().fold(f64::INFINITY, f64::min), 0.0);
            assert_eq!(col.iter().cloned().fold(f64::NEG_INFINITY, f64::max), 1.0);
        }
    }

    #[test]
    fn table_csv_round_trip() {
        let table = NormalizationTable {
            ranges: vec![FeatureRange { feature: "f1".into(), min: -0.1, max: 2.0 / 3.0 }],
        };
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().starts_with("feature,min,max\n"));
        assert_eq!(NormalizationTable::read_csv(buf.as_slice()).unwrap(), table);
    }

    fn labeled_pool(n_pos: usize, n_abs: usize) -> Dataset {
        let samples = (0..n_pos + n_abs)
            .map(|i| {
                let truth = if i < n_pos { Truth::Presence } else { Truth::Absence };
                Sample::new(format!("o{i}"), vec![i as f64 / (n_pos + n_abs) as f64], LabelState::background().with_truth(truth))
            })
            .collect();
        Dataset::new(names(1), samples)
    }

    #[test]
    fn exhaustive_positive_draw_returns_presence_stratum() {
        let d = labeled_pool(30, 70);
        let plan = SamplingPlan { n_positive: 30, n_background: 50, n_negative: 20, n_trials: 2, ..Default::default() };
        let draw = draw_training_sets(&d, &plan, 0).unwrap();
        let ids: Vec<&str> = draw.positives.iter().map(|s| s.id.as_str()).collect();
        let expected: Vec<String> = (0..30).map(|i| format!("o{i}")).collect();
        assert_eq!(ids, expected.iter().map(String::as_str).collect::<Vec<_>>());
        assert!(draw.background.iter().all(|s| s.label == LabelState::background()));
        assert!(draw.negatives.iter().all(|s| s.label.truth == Some(Truth::Absence)));
    }

    #[test]
    fn draw_errors() {
        let d = labeled_pool(10, 10);
        let plan = SamplingPlan { n_positive: 11, n_background: 5, n_negative: 5, n_trials: 1, ..Default::default() };
        assert!(matches!(draw_training_sets(&d, &plan, 0), Err(Error::Sampling(_))));
        let plan = SamplingPlan { n_positive: 5, n_background: 5, n_negative: 5, n_trials: 1, ..Default::default() };
        assert!(matches!(draw_training_sets(&d, &plan, 1), Err(Error::Parameter(_))));
        let mut no_truth = d.clone();
        no_truth.samples[0].label.truth = None;
        assert!(draw_training_sets(&no_truth, &plan, 0).is_err());
    }

    #[test]
    fn exclusion_flag_keeps_positives_out_of_background() {
        let d = labeled_pool(50, 50);
        let plan = SamplingPlan { n_positive: 40, n_background: 60, n_negative: 0, n_trials: 1, exclude_observed_positives: true, ..Default::default() };
        let draw = draw_training_sets(&d, &plan, 0).unwrap();
        let pos: HashSet<&str> = draw.positives.iter().map(|s| s.id.as_str()).collect();
        assert!(draw.background.iter().all(|s| !pos.contains(s.id.as_str())));
        assert!(draw.negatives.is_empty());
    }

    #[test]
    fn holdout_exact_small_case() {
        let samples = (0..32)
            .map(|i| Sample::new(format!("s{i}"), vec![0.0], if i % 2 == 0 { LabelState::positive() } else { LabelState::background() }))
            .collect();
        let d = Dataset::new(names(1), samples);
        let (train, val) = holdout_split(&d, 0.25, 1).unwrap();
        let (vp, vb, _) = partition_by_label(&val);
        assert_eq!((vp.len(), vb.len()), (4, 4));
        assert_eq!(train.len(), 24);
    }

    #[test]
    fn holdout_rejects_bad_fraction() {
        let d = labeled_pool(2, 2);
        assert!(holdout_split(&d, 0.0, 0).is_err());
        assert!(holdout_split(&d, 1.0, 0).is_err());
        assert!(holdout_split(&d.empty_like(), 0.5, 0).is_err());
    }
}
