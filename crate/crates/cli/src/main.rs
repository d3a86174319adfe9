//! `oneclass` command-line runner.
//!
//! `--config` always names the JSON configuration of the chosen subcommand:
//! a scene spec for `synth`, a sampling plan for `sample`, method parameters
//! for `train`, a tuner spec for `tune` and an experiment for `benchmark`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::Value;

use oneclass_core::data::Dataset;
use oneclass_core::harness::{
    emit_boxplot, load_report, run_benchmark, train_method, tune_method, write_atomic, write_report_csv,
    write_report_json, ExperimentConfig, MethodName, MethodSpec, SavedModel, TunerSpec,
};
use oneclass_core::ingest::{
    draw_training_sets, load_csv, min_max_normalize, save_csv, LabelMode, NormalizationTable, SamplingPlan,
    TrainingDraw,
};
use oneclass_core::metrics::{pb_confusion_from_predictions, AssessmentBundle, METRIC_NAMES};
use oneclass_core::synth::{generate_scene, SceneSpec, SCENE_A_SEED};
use oneclass_core::tuning::{Classifier, TuneResult};

#[derive(Parser)]
#[command(name = "oneclass", version, about = "One-class classification benchmark", arg_required_else_help = true)]
struct Cli {
    /// JSON configuration for the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the configuration's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Labels {
    Observed,
    Truth,
}

impl From<Labels> for LabelMode {
    fn from(l: Labels) -> Self {
        match l {
            Labels::Observed => LabelMode::Observed,
            Labels::Truth => LabelMode::Truth,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene as `scene.csv` (ground-truth labels) plus
    /// `normalization.csv`. Without `--config` the built-in scene A is used.
    Synth,
    /// Min-max normalize a CSV into `normalized.csv` and `normalization.csv`.
    Normalize {
        #[arg(long)]
        input: PathBuf,
        /// Apply an existing table instead of fitting one.
        #[arg(long)]
        table: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "observed")]
        labels: Labels,
    },
    /// Draw one trial's positives, background and negatives from a
    /// ground-truth CSV.
    Sample {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
    /// Tune a method on a sampled draw; writes `tune.json`.
    Tune {
        #[arg(long, value_enum)]
        method: Method,
        /// Directory written by `sample`.
        #[arg(long)]
        draw: PathBuf,
        /// Fixed method parameters (JSON object).
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
    },
    /// Train a method on a sampled draw; writes `model.json`.
    Train {
        #[arg(long, value_enum)]
        method: Method,
        #[arg(long)]
        draw: PathBuf,
        /// `tune.json` whose best parameters override the configuration.
        #[arg(long)]
        tuned: Option<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
    },
    /// Score a CSV with a saved model; writes `predictions.csv`.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "truth")]
        labels: Labels,
    },
    /// Assess a saved model against a ground-truth CSV; writes
    /// `assessment.json`. With `--draw`, F_pb is computed on that draw's
    /// positives and background.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        draw: Option<PathBuf>,
    },
    /// Run the multi-trial experiment; writes `report.json`, `report.csv`
    /// and one box plot per metric.
    Benchmark,
    /// Render a box plot of one metric from a saved report.
    Plot {
        /// Defaults to `report.json` in the output directory.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        metric: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Pbl,
    Pul,
    Maxent,
    Ocsvm,
    Bsvm,
    Ann,
    Svm,
}

impl From<Method> for MethodName {
    fn from(m: Method) -> Self {
        match m {
            Method::Pbl => MethodName::Pbl,
            Method::Pul => MethodName::Pul,
            Method::Maxent => MethodName::Maxent,
            Method::Ocsvm => MethodName::Ocsvm,
            Method::Bsvm => MethodName::Bsvm,
            Method::Ann => MethodName::Ann,
            Method::Svm => MethodName::Svm,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))
}

fn out_dir(cli_out: &Option<PathBuf>) -> Result<PathBuf> {
    let dir = cli_out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

const DRAW_FILES: [&str; 3] = ["positives.csv", "background.csv", "negatives.csv"];

fn load_draw(dir: &Path) -> Result<TrainingDraw> {
    let load = |name: &str| -> Result<Dataset> {
        let p = dir.join(name);
        load_csv(&p, LabelMode::Observed).with_context(|| format!("loading {}", p.display()))
    };
    let positives = load(DRAW_FILES[0])?;
    let background = load(DRAW_FILES[1])?;
    let negatives = if dir.join(DRAW_FILES[2]).exists() { load(DRAW_FILES[2])? } else { positives.empty_like() };
    Ok(TrainingDraw { positives, background, negatives })
}

fn method_spec(method: Method, config: &Option<PathBuf>) -> Result<MethodSpec> {
    let mut spec = MethodSpec::new(method.into());
    if let Some(path) = config {
        spec.params = read_json::<Value>(path)?;
    }
    Ok(spec)
}

fn run(cli: Cli) -> Result<()> {
    let out = cli.out.clone();
    match cli.command {
        Command::Synth => {
            let spec = match &cli.config {
                Some(p) => read_json::<SceneSpec>(p)?,
                None => SceneSpec::scene_a(),
            };
            let scene = generate_scene(&spec, cli.seed.unwrap_or(SCENE_A_SEED))?;
            let dir = out_dir(&out)?;
            save_csv(&scene.dataset, dir.join("scene.csv"), LabelMode::Truth)?;
            let mut table = Vec::new();
            scene.table.write_csv(&mut table)?;
            write_atomic(dir.join("normalization.csv"), &table)?;
            eprintln!("wrote {} objects to {}", scene.dataset.len(), dir.join("scene.csv").display());
        }
        Command::Normalize { input, table, labels } => {
            let mode = labels.into();
            let data = load_csv(&input, mode)?;
            let (normalized, table) = match table {
                Some(p) => {
                    let t = NormalizationTable::read_csv(std::fs::File::open(&p).with_context(|| format!("opening {}", p.display()))?)?;
                    (t.apply(&data)?, t)
                }
                None => min_max_normalize(&data)?,
            };
            let dir = out_dir(&out)?;
            save_csv(&normalized, dir.join("normalized.csv"), mode)?;
            let mut bytes = Vec::new();
            table.write_csv(&mut bytes)?;
            write_atomic(dir.join("normalization.csv"), &bytes)?;
        }
        Command::Sample { input, trial } => {
            let mut plan = match &cli.config {
                Some(p) => read_json::<SamplingPlan>(p)?,
                None => SamplingPlan::default(),
            };
            if let Some(s) = cli.seed {
                plan.seed = s;
            }
            let data = load_csv(&input, LabelMode::Truth)?;
            let draw = draw_training_sets(&data, &plan, trial)?;
            let dir = out_dir(&out)?;
            for (name, d) in DRAW_FILES.iter().zip([&draw.positives, &draw.background, &draw.negatives]) {
                save_csv(d, dir.join(name), LabelMode::Observed)?;
            }
        }
        Command::Tune { method, draw, params, threshold } => {
            let cfg = cli.config.as_ref().context("tune needs --config <tuner.json>")?;
            let tuner: TunerSpec = read_json(cfg)?;
            let spec = method_spec(method, &params)?;
            let draw = load_draw(&draw)?;
            let (_, result) = tune_method(spec.name, &spec.resolve()?, &tuner, &draw, cli.seed.unwrap_or(0), threshold)?;
            let dir = out_dir(&out)?;
            write_atomic(dir.join("tune.json"), &serde_json::to_vec_pretty(&result)?)?;
            eprintln!("best objective {} at {:?}", result.best_objective, result.best_params);
        }
        Command::Train { method, draw, tuned, threshold } => {
            let spec = method_spec(method, &cli.config)?;
            let mut params = spec.resolve()?;
            if let Some(p) = tuned {
                let t: TuneResult = read_json(&p)?;
                for (name, v) in t.param_names.iter().zip(&t.best_params) {
                    params.set(name, *v)?;
                }
            }
            let draw = load_draw(&draw)?;
            let model = train_method(spec.name, &params, &draw, cli.seed.unwrap_or(0), threshold)?;
            let dir = out_dir(&out)?;
            write_atomic(dir.join("model.json"), &serde_json::to_vec_pretty(&model)?)?;
        }
        Command::Predict { model, input, labels } => {
            let model = SavedModel::load(&model)?;
            let data = load_csv(&input, labels.into())?;
            let scores = model.scores(&data)?;
            let presence = model.predict_presence(&data)?;
            let mut csv = String::from("id,score,presence\n");
            for ((s, score), p) in data.iter().zip(&scores).zip(&presence) {
                csv.push_str(&format!("{},{score},{}\n", s.id, u8::from(*p)));
            }
            let dir = out_dir(&out)?;
            write_atomic(dir.join("predictions.csv"), csv.as_bytes())?;
        }
        Command::Evaluate { model, input, draw } => {
            let model = SavedModel::load(&model)?;
            let data = load_csv(&input, LabelMode::Truth)?;
            let truth = data.truth_vector()?;
            let pred = model.predict_presence(&data)?;
            let pb = match draw {
                Some(dir) => {
                    let d = load_draw(&dir)?;
                    let pb_set = d.positives.concat(&d.background)?;
                    let pb_pred = model.predict_presence(&pb_set)?;
                    Some(pb_confusion_from_predictions(&pb_set.observed_positive_mask(), &pb_pred)?)
                }
                None => None,
            };
            let bundle = AssessmentBundle::assess(&truth, &pred, pb.as_ref())?;
            let dir = out_dir(&out)?;
            write_atomic(dir.join("assessment.json"), &serde_json::to_vec_pretty(&bundle)?)?;
        }
        Command::Benchmark => {
            let path = cli.config.as_ref().context("benchmark needs --config <experiment.json>")?;
            let mut cfg: ExperimentConfig = read_json(path)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            let dir = out_dir(&out.or_else(|| cfg.out.clone()))?;
            let report = run_benchmark(&cfg)?;
            write_report_json(&report, dir.join("report.json"))?;
            write_report_csv(&report, dir.join("report.csv"))?;
            for metric in METRIC_NAMES {
                if report.aggregates.values().any(|m| m.contains_key(metric)) {
                    emit_boxplot(&report, metric, dir.join(format!("boxplot_{metric}.svg")))?;
                }
            }
            let failed = report.trials.iter().filter(|r| r.error.is_some()).count();
            if failed > 0 {
                eprintln!("warning: {failed} method runs failed; see report.json");
            }
        }
        Command::Plot { report, metric } => {
            let dir = out_dir(&out)?;
            let path = report.unwrap_or_else(|| dir.join("report.json"));
            let report = load_report(&path).with_context(|| format!("loading {}", path.display()))?;
            if !METRIC_NAMES.contains(&metric.as_str()) {
                bail!("unknown metric {metric:?}; valid metrics: {}", METRIC_NAMES.join(", "));
            }
            emit_boxplot(&report, &metric, dir.join(format!("boxplot_{metric}.svg")))?;
        }
    }
    Ok(())
}
