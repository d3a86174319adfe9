//! Seeded synthetic scenes with a closed-form Bayes posterior.
//!
//! Each class is a mixture of diagonal Gaussians. Features are generated in
//! raw coordinates, then min-max normalized; the returned
//! [`NormalizationTable`] maps normalized vectors back so that
//! [`analytic_posterior`] can be evaluated for any object.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, LabelState, Observed, Sample, Truth};
use crate::error::{param, Result};
use crate::ingest::{min_max_normalize, NormalizationTable};
use crate::rng::SeededRng;

/// Seed of the frozen benchmark scene.
pub const SCENE_A_SEED: u64 = 20_140_101;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassComponents {
    pub presence: Vec<GaussianComponent>,
    pub absence: Vec<GaussianComponent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub n_objects: usize,
    pub n_features: usize,
    pub prevalence: f64,
    pub class_components: ClassComponents,
    /// Multiplies every component mean, so 0 collapses the classes onto a
    /// common centre and larger values pull them apart.
    pub overlap: f64,
}

impl SceneSpec {
    /// The frozen benchmark scene: 43,256 objects, 24 features, prevalence
    /// 0.175, two components per class.
    ///
    /// Means are drawn once from a fixed stream; 16 of the 24 features carry
    /// class signal and the remaining 8 are pure noise shared by all
    /// components.
    pub fn scene_a() -> Self {
        let k = 24;
        let informative = 16;
        let mut rng = SeededRng::stream(SCENE_A_SEED, &[0x5CE7E]);
        let component = |shift: f64, weight: f64, var_range: (f64, f64), rng: &mut SeededRng| {
            let mean = (0..k)
                .map(|j| if j < informative { shift + 0.3 * rng.normal() } else { 0.0 })
                .collect();
            let variance = (0..k).map(|_| rng.uniform_in(var_range.0, var_range.1)).collect();
            GaussianComponent { mean, variance, weight }
        };
        // Broad absences, compact presences.
        let wide = (0.6, 1.4);
        let tight = (0.25, 0.6);
        let absence = vec![component(-1.4, 0.6, wide, &mut rng), component(-1.0, 0.4, wide, &mut rng)];
        let presence = vec![component(1.4, 0.55, tight, &mut rng), component(1.1, 0.45, tight, &mut rng)];
        Self {
            n_objects: 43_256,
            n_features: k,
            prevalence: 0.175,
            class_components: ClassComponents { presence, absence },
            overlap: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_objects == 0 || self.n_features == 0 {
            return param("scene needs at least one object and one feature");
        }
        if !(self.prevalence > 0.0 && self.prevalence < 1.0) {
            return param(format!("prevalence {} outside (0, 1)", self.prevalence));
        }
        if !(self.overlap >= 0.0 && self.overlap.is_finite()) {
            return param("overlap must be finite and non-negative");
        }
        for (name, comps) in [("presence", &self.class_components.presence), ("absence", &self.class_components.absence)] {
            if comps.is_empty() {
                return param(format!("{name} class has no components"));
            }
            let total: f64 = comps.iter().map(|c| c.weight).sum();
            if (total - 1.0).abs() > 1e-9 || comps.iter().any(|c| c.weight < 0.0) {
                return param(format!("{name} mixing weights must be non-negative and sum to 1"));
            }
            for c in comps {
                if c.mean.len() != self.n_features || c.variance.len() != self.n_features {
                    return param(format!("{name} component dimension differs from n_features"));
                }
                if c.variance.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                    return param(format!("{name} component has a non-positive variance"));
                }
            }
        }
        Ok(())
    }

    pub fn n_presences(&self) -> usize {
        (self.prevalence * self.n_objects as f64).round() as usize
    }

    fn log_class_density(&self, comps: &[GaussianComponent], x: &[f64]) -> f64 {
        let terms: Vec<f64> = comps
            .iter()
            .filter(|c| c.weight > 0.0)
            .map(|c| {
                let mut acc = c.weight.ln();
                for ((&xi, &mu), &var) in x.iter().zip(&c.mean).zip(&c.variance) {
                    let d = xi - self.overlap * mu;
                    acc -= 0.5 * ((2.0 * std::f64::consts::PI * var).ln() + d * d / var);
                }
                acc
            })
            .collect();
        log_sum_exp(&terms)
    }
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

/// Generated scene: normalized dataset with ground truth revealed (every
/// object is background to a learner) and the table to undo normalization.
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub dataset: Dataset,
    pub table: NormalizationTable,
}

impl SyntheticScene {
    /// Bayes posterior of an object given in normalized coordinates.
    pub fn posterior(&self, spec: &SceneSpec, normalized: &[f64]) -> f64 {
        analytic_posterior(spec, &self.table.denormalize(normalized))
    }
}

fn draw_component<'a>(comps: &'a [GaussianComponent], rng: &mut SeededRng) -> &'a GaussianComponent {
    let u = rng.uniform();
    let mut acc = 0.0;
    for c in comps {
        acc += c.weight;
        if u < acc {
            return c;
        }
    }
    comps.last().expect("validated non-empty")
}

pub fn generate_scene(spec: &SceneSpec, seed: u64) -> Result<SyntheticScene> {
    spec.validate()?;
    let n = spec.n_objects;
    let n1 = spec.n_presences();
    let mut labels: Vec<bool> = (0..n).map(|i| i < n1).collect();
    let mut rng = SeededRng::stream(seed, &[0]);
    rng.shuffle(&mut labels);

    let mut feat_rng = SeededRng::stream(seed, &[1]);
    let samples = labels
        .iter()
        .enumerate()
        .map(|(i, &presence)| {
            let comps = if presence { &spec.class_components.presence } else { &spec.class_components.absence };
            let c = draw_component(comps, &mut feat_rng);
            let x = c
                .mean
                .iter()
                .zip(&c.variance)
                .map(|(&mu, &var)| spec.overlap * mu + var.sqrt() * feat_rng.normal())
                .collect();
            let truth = if presence { Truth::Presence } else { Truth::Absence };
            Sample::new(format!("obj{i}"), x, LabelState::background().with_truth(truth))
        })
        .collect();
    let names = (1..=spec.n_features).map(|j| format!("f{j}")).collect();
    let (dataset, table) = min_max_normalize(&Dataset::new(names, samples))?;
    Ok(SyntheticScene { dataset, table })
}

/// Bayes `P(y = 1 | x)` for a raw-coordinate vector.
pub fn analytic_posterior(spec: &SceneSpec, x: &[f64]) -> f64 {
    let l1 = spec.prevalence.ln() + spec.log_class_density(&spec.class_components.presence, x);
    let l0 = (1.0 - spec.prevalence).ln() + spec.log_class_density(&spec.class_components.absence, x);
    // Logistic of the log-odds; stays in [0, 1] for any magnitude.
    let z = l1 - l0;
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Observes each true presence independently with probability `c`; every
/// other object becomes background. Ground truth is retained.
pub fn scar_label(d: &Dataset, c: f64, seed: u64) -> Result<Dataset> {
    if !(c > 0.0 && c <= 1.0) {
        return param(format!("labeling constant {c} outside (0, 1]"));
    }
    let truth = d.truth_vector()?;
    let mut rng = SeededRng::stream(seed, &[0x5CA7]);
    let mut out = d.clone();
    for (s, presence) in out.samples.iter_mut().zip(truth) {
        s.label.observed = if presence && rng.uniform() < c {
            Observed::ObservedPositive
        } else {
            Observed::Background
        };
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_d(prevalence: f64, m0: f64, m1: f64) -> SceneSpec {
        let comp = |m: f64| GaussianComponent { mean: vec![m], variance: vec![1.0], weight: 1.0 };
        SceneSpec {
            n_objects: 10,
            n_features: 1,
            prevalence,
            class_components: ClassComponents { presence: vec![comp(m1)], absence: vec![comp(m0)] },
            overlap: 1.0,
        }
    }

    #[test]
    fn presence_count_is_exact() {
        let spec = one_d(0.5, 0.0, 2.0);
        let scene = generate_scene(&spec, 1).unwrap();
        let truth = scene.dataset.truth_vector().unwrap();
        assert_eq!(truth.iter().filter(|&&t| t).count(), 5);
    }

    #[test]
    fn scene_a_defaults() {
        let spec = SceneSpec::scene_a();
        spec.validate().unwrap();
        assert_eq!(spec.n_presences(), 7_570);
    }

    #[test]
    fn posterior_closed_forms() {
        let spec = one_d(0.5, 0.0, 2.0);
        assert!((analytic_posterior(&spec, &[1.0]) - 0.5).abs() < 1e-12);
        // log-odds at x = 0 is -2 for N(2,1) vs N(0,1).
        let expected = 1.0 / (1.0 + 2f64.exp());
        assert!((analytic_posterior(&spec, &[0.0]) - expected).abs() < 1e-12);
        let far = one_d(0.5, 0.0, 20.0);
        assert!(analytic_posterior(&far, &[20.0]) >= 0.99);
    }

    #[test]
    fn degenerate_specs_rejected() {
        let mut spec = one_d(0.5, 0.0, 1.0);
        spec.class_components.absence[0].variance[0] = 0.0;
        assert!(generate_scene(&spec, 0).is_err());
        let mut spec = one_d(0.5, 0.0, 1.0);
        spec.class_components.presence[0].weight = 0.7;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn scar_boundaries() {
        let spec = SceneSpec { n_objects: 200, ..one_d(0.3, 0.0, 2.0) };
        let d = generate_scene(&spec, 3).unwrap().dataset;
        let all = scar_label(&d, 1.0, 0).unwrap();
        let truth = d.truth_vector().unwrap();
        for (s, t) in all.samples.iter().zip(&truth) {
            assert_eq!(s.label.observed == Observed::ObservedPositive, *t);
        }
        assert!(scar_label(&d, 0.0, 0).is_err());
        assert!(scar_label(&d, 1.5, 0).is_err());
    }
}
