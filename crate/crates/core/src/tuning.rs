//! Hyperparameter search maximizing F_pb on a validation split: exhaustive
//! grid search and synchronous global-best particle swarm optimization.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::time::Instant;

use crate::data::{Dataset, Observed};
use crate::error::{param, Result};
use crate::metrics::{f_pb, pb_confusion_from_predictions};
use crate::pu::PuModel;
use crate::rng::SeededRng;
use crate::soft::TrainedSoftModel;
use crate::svm::SvmModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Scale {
    Log2,
    Linear,
}

/// One search dimension. LOG2 axes are spaced evenly in the exponent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    pub scale: Scale,
    pub lower: f64,
    pub upper: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
}

fn default_steps() -> usize {
    11
}

impl Axis {
    pub fn log2(name: &str, lower: f64, upper: f64, steps: usize) -> Self {
        Self { name: name.into(), scale: Scale::Log2, lower, upper, steps }
    }

    pub fn linear(name: &str, lower: f64, upper: f64, steps: usize) -> Self {
        Self { name: name.into(), scale: Scale::Linear, lower, upper, steps }
    }

    /// `2^-10 ..= 2^10` at even exponents.
    pub fn penalty(name: &str) -> Self {
        Self::log2(name, 2f64.powi(-10), 2f64.powi(10), 11)
    }

    /// `0.05, 0.10, ..., 0.50`; large ν rejects most of the training data.
    pub fn nu() -> Self {
        Self::linear("nu", 0.05, 0.5, 10)
    }

    fn validate(&self, need_steps: bool) -> Result<()> {
        if !(self.lower.is_finite() && self.upper.is_finite() && self.lower <= self.upper) {
            return param(format!("axis {} has invalid bounds [{}, {}]", self.name, self.lower, self.upper));
        }
        if self.scale == Scale::Log2 && self.lower <= 0.0 {
            return param(format!("LOG2 axis {} needs positive bounds", self.name));
        }
        if need_steps && self.steps < 2 {
            return param(format!("axis {} needs at least 2 steps", self.name));
        }
        Ok(())
    }

    /// Bounds in search coordinates (the exponent for LOG2).
    fn search_bounds(&self) -> (f64, f64) {
        match self.scale {
            Scale::Log2 => (self.lower.log2(), self.upper.log2()),
            Scale::Linear => (self.lower, self.upper),
        }
    }

    fn to_param(&self, u: f64) -> f64 {
        let v = match self.scale {
            Scale::Log2 => u.exp2(),
            Scale::Linear => u,
        };
        v.clamp(self.lower, self.upper)
    }

    pub fn values(&self) -> Vec<f64> {
        let (lo, hi) = self.search_bounds();
        let last = (self.steps - 1) as f64;
        (0..self.steps)
            .map(|k| {
                let u = if k + 1 == self.steps { hi } else { lo + (hi - lo) * k as f64 / last };
                self.to_param(u)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub axes: Vec<Axis>,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.axes.is_empty() {
            return param("grid needs at least one axis");
        }
        self.axes.iter().try_for_each(|a| a.validate(true))
    }

    pub fn size(&self) -> usize {
        self.axes.iter().map(|a| a.steps).product()
    }

    /// Lexicographic order, first axis outermost.
    pub fn points(&self) -> Vec<Vec<f64>> {
        let values: Vec<Vec<f64>> = self.axes.iter().map(Axis::values).collect();
        let mut out = vec![Vec::new()];
        for vals in &values {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    vals.iter().map(move |v| {
                        let mut p = prefix.clone();
                        p.push(*v);
                        p
                    })
                })
                .collect();
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsoConfig {
    #[serde(default = "default_swarm")]
    pub swarm_size: usize,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_inertia")]
    pub inertia: f64,
    #[serde(default = "default_acceleration")]
    pub cognitive: f64,
    #[serde(default = "default_acceleration")]
    pub social: f64,
    pub bounds: Vec<Axis>,
    #[serde(default)]
    pub seed: u64,
}

fn default_swarm() -> usize {
    20
}
fn default_iterations() -> usize {
    50
}
fn default_inertia() -> f64 {
    0.72
}
fn default_acceleration() -> f64 {
    1.49
}

impl PsoConfig {
    pub fn new(bounds: Vec<Axis>, seed: u64) -> Self {
        Self {
            swarm_size: default_swarm(),
            iterations: default_iterations(),
            inertia: default_inertia(),
            cognitive: default_acceleration(),
            social: default_acceleration(),
            bounds,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.swarm_size == 0 {
            return param("swarm_size must be positive");
        }
        if self.bounds.is_empty() {
            return param("PSO needs at least one bounded parameter");
        }
        for (name, w) in [("inertia", self.inertia), ("cognitive", self.cognitive), ("social", self.social)] {
            if !(w >= 0.0 && w.is_finite()) {
                return param(format!("PSO {name} weight must be finite and non-negative, got {w}"));
            }
        }
        self.bounds.iter().try_for_each(|a| a.validate(false))
    }
}

/// Objective value with an optional failure note. Failures score −∞.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub diagnostic: Option<String>,
}

impl Evaluation {
    pub fn ok(value: f64) -> Self {
        if value.is_nan() {
            return Self::failed("objective returned NaN");
        }
        Self { value, diagnostic: None }
    }

    pub fn failed(why: impl Into<String>) -> Self {
        Self { value: f64::NEG_INFINITY, diagnostic: Some(why.into()) }
    }
}

impl From<Result<f64>> for Evaluation {
    fn from(r: Result<f64>) -> Self {
        match r {
            Ok(v) => Self::ok(v),
            Err(e) => Self::failed(e.to_string()),
        }
    }
}

/// Serializes non-finite objectives as `null`, read back as −∞.
mod objective_serde {
    use super::*;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub params: Vec<f64>,
    #[serde(with = "objective_serde")]
    pub objective: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub param_names: Vec<String>,
    pub best_params: Vec<f64>,
    #[serde(with = "objective_serde")]
    pub best_objective: f64,
    pub evaluations: usize,
    pub wall_time: f64,
    pub trace: Vec<TraceEntry>,
}

impl TuneResult {
    pub fn param(&self, name: &str) -> Option<f64> {
        self.param_names.iter().position(|n| n == name).map(|i| self.best_params[i])
    }
}

fn finish(names: Vec<String>, trace: Vec<TraceEntry>, best: usize, start: Instant) -> TuneResult {
    TuneResult {
        param_names: names,
        best_params: trace[best].params.clone(),
        best_objective: trace[best].objective,
        evaluations: trace.len(),
        wall_time: start.elapsed().as_secs_f64(),
        trace,
    }
}

/// Evaluates every grid point; ties keep the earliest point.
pub fn grid_search(mut objective: impl FnMut(&[f64]) -> Evaluation, grid: &GridSpec) -> Result<TuneResult> {
    grid.validate()?;
    let start = Instant::now();
    let mut trace: Vec<TraceEntry> = Vec::with_capacity(grid.size());
    let mut best = 0;
    for p in grid.points() {
        let e = objective(&p);
        if trace.is_empty() || e.value > trace[best].objective {
            best = trace.len();
        }
        trace.push(TraceEntry { params: p, objective: e.value, diagnostic: e.diagnostic });
    }
    Ok(finish(grid.axes.iter().map(|a| a.name.clone()).collect(), trace, best, start))
}

/// Synchronous global-best PSO in search coordinates. Velocities start at
/// zero, are clamped to the per-axis range, and reverse on reflection at a
/// bound. Uses `swarm_size * (iterations + 1)` evaluations.
pub fn pso_optimize(mut objective: impl FnMut(&[f64]) -> Evaluation, cfg: &PsoConfig) -> Result<TuneResult> {
    cfg.validate()?;
    let start = Instant::now();
    let dims = cfg.bounds.len();
    let bounds: Vec<(f64, f64)> = cfg.bounds.iter().map(Axis::search_bounds).collect();
    let mut rng = SeededRng::stream(cfg.seed, &[0x9507]);
    let mut pos: Vec<Vec<f64>> = (0..cfg.swarm_size)
        .map(|_| bounds.iter().map(|&(lo, hi)| rng.uniform_in(lo, hi)).collect())
        .collect();
    let mut vel = vec![vec![0.0; dims]; cfg.swarm_size];
    let to_params = |u: &[f64]| -> Vec<f64> { cfg.bounds.iter().zip(u).map(|(a, &x)| a.to_param(x)).collect() };

    let mut trace = Vec::with_capacity(cfg.swarm_size * (cfg.iterations + 1));
    let mut evaluate = |pos: &[Vec<f64>], trace: &mut Vec<TraceEntry>| -> Vec<f64> {
        pos.iter()
            .map(|u| {
                let p = to_params(u);
                let e = objective(&p);
                trace.push(TraceEntry { params: p, objective: e.value, diagnostic: e.diagnostic });
                e.value
            })
            .collect()
    };

    let scores = evaluate(&pos, &mut trace);
    let mut pbest = pos.clone();
    let mut pbest_score = scores.clone();
    let mut g = 0;
    for i in 1..cfg.swarm_size {
        if scores[i] > scores[g] {
            g = i;
        }
    }
    let mut best_trace = g;
    let mut gbest = pos[g].clone();
    let mut gbest_score = scores[g];

    for it in 1..=cfg.iterations {
        for i in 0..cfg.swarm_size {
            for d in 0..dims {
                let (lo, hi) = bounds[d];
                let range = hi - lo;
                let (r1, r2) = (rng.uniform(), rng.uniform());
                let v = cfg.inertia * vel[i][d]
                    + cfg.cognitive * r1 * (pbest[i][d] - pos[i][d])
                    + cfg.social * r2 * (gbest[d] - pos[i][d]);
                let mut v = v.clamp(-range, range);
                let mut x = pos[i][d] + v;
                if x > hi {
                    x = hi - (x - hi);
                    v = -v;
                } else if x < lo {
                    x = lo + (lo - x);
                    v = -v;
                }
                pos[i][d] = x.clamp(lo, hi);
                vel[i][d] = v;
            }
        }
        let base = trace.len();
        let scores = evaluate(&pos, &mut trace);
        for i in 0..cfg.swarm_size {
            if scores[i] > pbest_score[i] {
                pbest_score[i] = scores[i];
                pbest[i] = pos[i].clone();
            }
            if scores[i] > gbest_score {
                gbest_score = scores[i];
                gbest = pos[i].clone();
                best_trace = base + i;
            }
        }
        debug_assert_eq!(trace.len(), cfg.swarm_size * (it + 1));
    }
    Ok(finish(cfg.bounds.iter().map(|a| a.name.clone()).collect(), trace, best_trace, start))
}

/// Anything that labels each sample of a dataset as presence or absence.
pub trait Classifier {
    fn predict_presence(&self, d: &Dataset) -> Result<Vec<bool>>;
}

impl Classifier for PuModel {
    fn predict_presence(&self, d: &Dataset) -> Result<Vec<bool>> {
        Ok(self.probabilities(d)?.into_iter().map(|p| p >= self.threshold).collect())
    }
}

impl Classifier for SvmModel {
    fn predict_presence(&self, d: &Dataset) -> Result<Vec<bool>> {
        Ok(self.decision_values(&d.feature_matrix())?.into_iter().map(|f| f >= 0.0).collect())
    }
}

/// Soft scores cut at 0.5.
impl Classifier for TrainedSoftModel {
    fn predict_presence(&self, d: &Dataset) -> Result<Vec<bool>> {
        Ok(self.predict_dataset(d)?.into_iter().map(|s| s >= 0.5).collect())
    }
}

/// Trains with `fit` on `train_part` and scores F_pb of its predictions on
/// `validation`, whose observed positives play `s = 1`.
pub fn objective_fpb<M: Classifier>(
    fit: impl FnOnce(&Dataset) -> Result<M>,
    train_part: &Dataset,
    validation: &Dataset,
) -> Evaluation {
    let s: Vec<bool> = validation.iter().map(|x| x.label.observed == Observed::ObservedPositive).collect();
    if !s.iter().any(|&v| v) || s.iter().all(|&v| v) {
        return Evaluation::failed("validation needs observed positives and background");
    }
    let run = || -> Result<f64> {
        let model = fit(train_part)?;
        let pred = model.predict_presence(validation)?;
        Ok(f_pb(&pb_confusion_from_predictions(&s, &pred)?).value)
    };
    run().into()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{LabelState, Sample};

    #[test]
    fn log2_axis_hits_integer_exponents() {
        let a = Axis::log2("C", 2f64.powi(-10), 2f64.powi(10), 11);
        let v = a.values();
        assert_eq!(v.len(), 11);
        for (k, x) in v.iter().enumerate() {
            assert_eq!(*x, 2f64.powi(-10 + 2 * k as i32));
        }
        assert_eq!(Axis::penalty("C").values(), v);
        let nu = Axis::nu().values();
        assert_eq!(nu.len(), 10);
        assert!((nu[1] - 0.1).abs() < 1e-15 && (nu[8] - 0.45).abs() < 1e-15 && nu[9] == 0.5);
    }

    #[test]
    fn grid_validation() {
        assert!(GridSpec { axes: vec![Axis::linear("x", 0.0, 1.0, 1)] }.validate().is_err());
        assert!(GridSpec { axes: vec![Axis::log2("x", 0.0, 1.0, 3)] }.validate().is_err());
        assert!(GridSpec { axes: vec![Axis::linear("x", 0.0, f64::INFINITY, 3)] }.validate().is_err());
    }

    #[test]
    fn concave_grid_maximum() {
        let grid = GridSpec { axes: vec![Axis::linear("x", -2.0, 2.0, 9)] };
        let r = grid_search(|p| Evaluation::ok(-(p[0] - 0.5).powi(2)), &grid).unwrap();
        assert_eq!(r.best_params, vec![0.5]);
        assert_eq!(r.evaluations, 9);
    }

    #[test]
    fn ties_keep_first_point() {
        let grid = GridSpec { axes: vec![Axis::linear("a", 0.0, 1.0, 3), Axis::linear("b", 0.0, 1.0, 4)] };
        let r = grid_search(|_| Evaluation::ok(1.0), &grid).unwrap();
        assert_eq!(r.best_params, vec![0.0, 0.0]);
        assert_eq!(r.trace.len(), 12);
        // First axis outermost.
        assert_eq!(r.trace[1].params, vec![0.0, 1.0 / 3.0]);
    }

    #[test]
    fn failures_are_ranked_last_and_serialize_as_null() {
        let grid = GridSpec { axes: vec![Axis::linear("x", 0.0, 1.0, 3)] };
        let r = grid_search(|p| if p[0] < 0.5 { Evaluation::failed("boom") } else { Evaluation::ok(p[0]) }, &grid).unwrap();
        assert_eq!(r.best_params, vec![1.0]);
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"objective\":null"));
        let back: TuneResult = serde_json::from_str(&json).unwrap();
        assert_eq!(back.trace[0].objective, f64::NEG_INFINITY);
    }

    #[test]
    fn pso_sphere() {
        let cfg = PsoConfig::new(vec![Axis::linear("x", -5.0, 5.0, 2), Axis::linear("y", -5.0, 5.0, 2)], 3);
        let r = pso_optimize(|p| Evaluation::ok(-(p[0] * p[0] + p[1] * p[1])), &cfg).unwrap();
        assert!(r.best_params.iter().all(|v| v.abs() <= 0.1), "{:?}", r.best_params);
        assert_eq!(r.evaluations, 20 * 51);
        let again = pso_optimize(|p| Evaluation::ok(-(p[0] * p[0] + p[1] * p[1])), &cfg).unwrap();
        assert_eq!(r.trace, again.trace);
    }

    #[test]
    fn pso_frozen_particle() {
        let mut cfg = PsoConfig::new(vec![Axis::linear("x", 0.0, 1.0, 2)], 9);
        cfg.swarm_size = 1;
        cfg.iterations = 5;
        cfg.inertia = 0.0;
        cfg.cognitive = 0.0;
        cfg.social = 0.0;
        let r = pso_optimize(|p| Evaluation::ok(p[0]), &cfg).unwrap();
        assert!(r.trace.iter().all(|t| t.params == r.trace[0].params));
        assert_eq!(r.best_params, r.trace[0].params);
    }

    #[test]
    fn pso_respects_bounds() {
        let cfg = PsoConfig::new(vec![Axis::log2("c", 2f64.powi(-10), 2f64.powi(10), 2)], 1);
        let r = pso_optimize(|p| Evaluation::ok(p[0]), &cfg).unwrap();
        assert!(r.trace.iter().all(|t| t.params[0] >= 2f64.powi(-10) && t.params[0] <= 1024.0));
        let mut best = f64::NEG_INFINITY;
        for t in &r.trace {
            best = best.max(t.objective);
        }
        assert_eq!(r.best_objective, best);
    }

    struct Fixed(Vec<bool>);
    impl Classifier for Fixed {
        fn predict_presence(&self, _: &Dataset) -> Result<Vec<bool>> {
            Ok(self.0.clone())
        }
    }

    fn validation() -> Dataset {
        let mk = |i: usize, l| Sample::new(format!("v{i}"), vec![0.0], l);
        Dataset::new(
            vec!["x".into()],
            vec![mk(0, LabelState::positive()), mk(1, LabelState::positive()), mk(2, LabelState::background())],
        )
    }

    #[test]
    fn fpb_objective_boundaries() {
        let v = validation();
        let perfect = objective_fpb(|_| Ok(Fixed(vec![true, true, false])), &v, &v);
        assert_eq!(perfect.value, 2.0);
        let none = objective_fpb(|_| Ok(Fixed(vec![false; 3])), &v, &v);
        assert_eq!(none.value, 0.0);
        let fail = objective_fpb(|_| -> Result<Fixed> { param("nope") }, &v, &v);
        assert_eq!(fail.value, f64::NEG_INFINITY);
        assert!(fail.diagnostic.unwrap().contains("nope"));
    }
}
