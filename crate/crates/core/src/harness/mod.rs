//! Multi-trial benchmark runner.
//!
//! Each trial draws a fresh training set, optionally tunes each method,
//! trains it, predicts the evaluation set and assesses the predictions
//! against ground truth. F_pb is measured on a second positive and
//! background draw of the same sizes. Everything except wall-clock fields is a pure function of
//! the configuration.

mod methods;
mod report;

pub use methods::{
    train_method, tune_method, BsvmParams, MethodName, MethodParams, MethodSpec, OcsvmParams, PuParams, SavedModel,
    SvmParams, TunerSpec,
};
pub use report::{emit_boxplot, load_report, render_boxplot, strip_timing, write_atomic, write_report_csv, write_report_json, CSV_HEADER};

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::PathBuf;
use std::time::Instant;

use crate::data::Dataset;
use crate::error::{param, Result};
use crate::ingest::{draw_training_sets, load_csv, LabelMode, SamplingPlan, TrainingDraw};
use crate::metrics::{aggregate_trials, pb_confusion_from_predictions, AssessmentBundle, Summary};
use crate::rng::derive_seed;
use crate::synth::{generate_scene, SceneSpec};
use crate::tuning::{Classifier, TuneResult};

pub const REPORT_SCHEMA: u32 = 1;

/// A named built-in scene or a full specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SceneRef {
    Named(String),
    Spec(SceneSpec),
}

impl SceneRef {
    pub fn spec(&self) -> Result<SceneSpec> {
        match self {
            Self::Named(n) if n == "scene_a" => Ok(SceneSpec::scene_a()),
            Self::Named(n) => param(format!("unknown scene {n:?}; built-in scenes: scene_a")),
            Self::Spec(s) => Ok(s.clone()),
        }
    }
}

/// CSV input must carry ground truth (labels 1/0, `-1` for unknown).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Csv(PathBuf),
    Scene(SceneRef),
}

impl DataSource {
    /// Loads or generates the dataset. Scenes are generated with `seed`.
    pub fn load(&self, seed: u64) -> Result<Dataset> {
        match self {
            Self::Csv(path) => load_csv(path, LabelMode::Truth),
            Self::Scene(s) => Ok(generate_scene(&s.spec()?, seed)?.dataset),
        }
    }
}

fn default_threshold() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub data: DataSource,
    #[serde(default)]
    pub sampling: SamplingPlan,
    pub methods: Vec<MethodSpec>,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Drop each trial's training objects from its evaluation set.
    #[serde(default)]
    pub exclude_training: bool,
}

impl ExperimentConfig {
    /// Frozen scene, default draw sizes, all seven methods with defaults.
    pub fn scene_a_default(seed: u64) -> Self {
        use MethodName::*;
        Self {
            seed,
            data: DataSource::Scene(SceneRef::Named("scene_a".into())),
            sampling: SamplingPlan::default(),
            methods: [Pbl, Pul, Maxent, Ocsvm, Bsvm, Ann, Svm].into_iter().map(MethodSpec::new).collect(),
            threshold: 0.5,
            out: None,
            exclude_training: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return param("experiment needs at least one method");
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return param(format!("threshold {} outside (0, 1)", self.threshold));
        }
        if self.sampling.n_trials == 0 {
            return param("n_trials must be positive");
        }
        let mut labels = HashSet::new();
        for m in &self.methods {
            if !labels.insert(m.label()) {
                return param(format!("duplicate method label {:?}", m.label()));
            }
            m.resolve()?;
        }
        if self.methods.iter().any(|m| m.name.is_binary()) && self.sampling.n_negative == 0 {
            return param("binary baselines need sampling.n_negative > 0");
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assessment: Option<AssessmentBundle>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tune: Option<TuneResult>,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub details: serde_json::Value,
    pub train_seconds: f64,
    pub predict_seconds: f64,
    #[serde(default)]
    pub tune_seconds: f64,
}

impl TrialRecord {
    pub fn is_ok(&self) -> bool {
        self.assessment.is_some()
    }
}

pub type Aggregates = BTreeMap<String, BTreeMap<String, Summary>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: u32,
    pub config: ExperimentConfig,
    pub trials: Vec<TrialRecord>,
    pub aggregates: Aggregates,
}

impl Report {
    /// Successful records of one method in trial order.
    pub fn method_records<'a>(&'a self, method: &'a str) -> impl Iterator<Item = &'a TrialRecord> + 'a {
        self.trials.iter().filter(move |r| r.method == method && r.is_ok())
    }

    pub fn metric_values(&self, method: &str, metric: &str) -> Vec<f64> {
        self.method_records(method)
            .filter_map(|r| r.assessment.as_ref().and_then(|a| a.get(metric)))
            .collect()
    }
}

/// `aggregate_trials` per method over its successful records; methods with
/// no successful trial are omitted.
pub fn compute_aggregates(trials: &[TrialRecord], methods: &[String]) -> Result<Aggregates> {
    let mut out = BTreeMap::new();
    for m in methods {
        let bundles: Vec<AssessmentBundle> =
            trials.iter().filter(|r| &r.method == m).filter_map(|r| r.assessment.clone()).collect();
        if !bundles.is_empty() {
            out.insert(m.clone(), aggregate_trials(&bundles)?);
        }
    }
    Ok(out)
}

/// Seed tags: every PU method of a trial shares one stream so PBL and PUL
/// with equal parameters reuse a single base model.
const TAG_PU: u64 = 0x50_55;
const TAG_METHOD: u64 = 0x4D;
const TAG_TUNE: u64 = 0x54;
const TAG_SAMPLING: u64 = 0x53;
const TAG_PB_EVAL: u64 = 0x45;

fn method_seed(cfg_seed: u64, trial: usize, index: usize, name: MethodName) -> u64 {
    match name {
        MethodName::Pbl | MethodName::Pul => derive_seed(cfg_seed, &[TAG_PU, trial as u64]),
        _ => derive_seed(cfg_seed, &[TAG_METHOD, trial as u64, index as u64]),
    }
}

struct Evaluation<'a> {
    data: Dataset,
    truth: Vec<bool>,
    pb_set: &'a Dataset,
    observed: Vec<bool>,
}

fn assess(model: &SavedModel, ev: &Evaluation<'_>) -> Result<AssessmentBundle> {
    let pred = model.predict_presence(&ev.data)?;
    let pb_pred = model.predict_presence(ev.pb_set)?;
    let pb = pb_confusion_from_predictions(&ev.observed, &pb_pred)?;
    AssessmentBundle::assess(&ev.truth, &pred, Some(&pb))
}

fn draw_ids(draw: &TrainingDraw) -> HashSet<String> {
    draw.positives
        .iter()
        .chain(draw.background.iter())
        .chain(draw.negatives.iter())
        .map(|s| s.id.clone())
        .collect()
}

/// Runs the configured protocol. Individual method failures are recorded
/// and do not stop the run.
pub fn run_benchmark(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    let data = cfg.data.load(cfg.seed)?;
    let full_truth = data.truth_vector()?;
    let mut plan = cfg.sampling.clone();
    plan.seed = derive_seed(cfg.seed, &[TAG_SAMPLING]);
    // F_pb is scored on a second presence-background draw, not the training one.
    let mut pb_plan = plan.clone();
    pb_plan.seed = derive_seed(cfg.seed, &[TAG_PB_EVAL]);
    pb_plan.n_negative = 0;
    let labels: Vec<String> = cfg.methods.iter().map(MethodSpec::label).collect();
    let mut trials = Vec::new();

    for trial in 0..plan.n_trials {
        let draw = draw_training_sets(&data, &plan, trial)?;
        let pb_draw = draw_training_sets(&data, &pb_plan, trial)?;
        let pb_set = pb_draw.positives.concat(&pb_draw.background)?;
        let observed = pb_set.observed_positive_mask();
        let ev = if cfg.exclude_training {
            let ids = draw_ids(&draw);
            let keep: Vec<usize> = (0..data.len()).filter(|&i| !ids.contains(&data.samples[i].id)).collect();
            let truth = keep.iter().map(|&i| full_truth[i]).collect();
            Evaluation { data: data.subset(&keep), truth, pb_set: &pb_set, observed }
        } else {
            Evaluation { data: data.clone(), truth: full_truth.clone(), pb_set: &pb_set, observed }
        };

        // PU models keyed by their parameters, so PBL and PUL share a base.
        let mut pu_cache: HashMap<String, (SavedModel, f64)> = HashMap::new();
        for (index, spec) in cfg.methods.iter().enumerate() {
            let mut rec = TrialRecord {
                trial,
                method: labels[index].clone(),
                assessment: None,
                error: None,
                tune: None,
                details: serde_json::Value::Null,
                train_seconds: 0.0,
                predict_seconds: 0.0,
                tune_seconds: 0.0,
            };
            let seed = method_seed(cfg.seed, trial, index, spec.name);
            let outcome = (|| -> Result<()> {
                let mut params = spec.resolve()?;
                if let Some(tuner) = &spec.tuner {
                    let t = Instant::now();
                    let tune_seed = derive_seed(cfg.seed, &[TAG_TUNE, trial as u64, index as u64]);
                    let (tuned, result) = tune_method(spec.name, &params, tuner, &draw, tune_seed, cfg.threshold)?;
                    rec.tune_seconds = t.elapsed().as_secs_f64();
                    rec.tune = Some(result);
                    params = tuned;
                }
                let model = match (&params, spec.tuner.is_none()) {
                    (MethodParams::Pu(p), true) => {
                        let key = serde_json::to_string(p)?;
                        let variant_model = |m: &SavedModel| match (m, spec.name) {
                            (SavedModel::Pu(pu), MethodName::Pbl) => SavedModel::Pu(pu.with_variant(crate::pu::PuVariant::Pbl)),
                            (SavedModel::Pu(pu), _) => SavedModel::Pu(pu.with_variant(crate::pu::PuVariant::Pul)),
                            (other, _) => other.clone(),
                        };
                        if let Some((m, secs)) = pu_cache.get(&key) {
                            rec.train_seconds = *secs;
                            variant_model(m)
                        } else {
                            let t = Instant::now();
                            let m = train_method(spec.name, &params, &draw, seed, cfg.threshold)?;
                            rec.train_seconds = t.elapsed().as_secs_f64();
                            pu_cache.insert(key, (m.clone(), rec.train_seconds));
                            m
                        }
                    }
                    _ => {
                        let t = Instant::now();
                        let m = train_method(spec.name, &params, &draw, seed, cfg.threshold)?;
                        rec.train_seconds = t.elapsed().as_secs_f64();
                        m
                    }
                };
                let t = Instant::now();
                let bundle = assess(&model, &ev)?;
                rec.predict_seconds = t.elapsed().as_secs_f64();
                rec.details = model.details();
                rec.assessment = Some(bundle);
                Ok(())
            })();
            if let Err(e) = outcome {
                rec.error = Some(e.to_string());
            }
            trials.push(rec);
        }
    }
    let aggregates = compute_aggregates(&trials, &labels)?;
    Ok(Report { schema: REPORT_SCHEMA, config: cfg.clone(), trials, aggregates })
}
