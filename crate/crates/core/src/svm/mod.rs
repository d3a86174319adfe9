//! RBF-kernel support vector machines on top of the in-crate SMO solver:
//! soft-margin C-SVC, biased SVM (separate penalties for positives and
//! background) and the ν one-class SVM.

pub mod smo;

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::data::{Dataset, Matrix};
use crate::error::{param, Error, Result};
use smo::{solve_dual, CachedGram, DenseGram, DualProblem, Gram, SmoOptions, SmoSolution};

pub use smo::smo_solve;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RbfKernel {
    pub gamma: f64,
}

impl RbfKernel {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return param(format!("RBF gamma must be positive, got {gamma}"));
        }
        Ok(Self { gamma })
    }

    #[inline]
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        (-self.gamma * d2).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SvmVariant {
    Csvc,
    Bsvm,
    Ocsvm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum SvmHyperparams {
    Csvc { c: f64 },
    Bsvm { c_plus: f64, c_minus: f64 },
    Ocsvm { nu: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub iterations: usize,
    pub max_violation: f64,
    pub objective: f64,
    pub tolerance: f64,
}

pub const SVM_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub version: u32,
    pub variant: SvmVariant,
    pub support_vectors: Vec<Vec<f64>>,
    /// `y_i α_i` for C-SVC and biased SVM, `α_i` for the one-class SVM.
    pub coefficients: Vec<f64>,
    /// Bias `b` for C-SVC and biased SVM, `ρ` for the one-class SVM.
    pub offset: f64,
    pub kernel: RbfKernel,
    pub hyperparams: SvmHyperparams,
    pub diagnostics: SolverDiagnostics,
}

impl SvmModel {
    fn kernel_sum(&self, x: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.coefficients)
            .map(|(sv, a)| a * self.kernel.eval(sv, x))
            .sum()
    }

    pub fn decision_value(&self, x: &[f64]) -> Result<f64> {
        let dim = self.support_vectors.first().map_or(x.len(), Vec::len);
        if x.len() != dim {
            return param(format!("expected {dim} features, got {}", x.len()));
        }
        let s = self.kernel_sum(x);
        Ok(match self.variant {
            SvmVariant::Ocsvm => s - self.offset,
            SvmVariant::Csvc | SvmVariant::Bsvm => s + self.offset,
        })
    }

    /// `+1` when the decision value is non-negative.
    pub fn predict_label(&self, x: &[f64]) -> Result<i8> {
        Ok(if self.decision_value(x)? >= 0.0 { 1 } else { -1 })
    }

    pub fn decision_values(&self, x: &Matrix) -> Result<Vec<f64>> {
        x.iter_rows().map(|r| self.decision_value(r)).collect()
    }

    pub fn predict_labels(&self, x: &Matrix) -> Result<Vec<i8>> {
        x.iter_rows().map(|r| self.predict_label(r)).collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let m: Self = serde_json::from_slice(&std::fs::read(path)?)?;
        if m.version != SVM_FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported SVM model version {}", m.version)));
        }
        Ok(m)
    }
}

/// Kernel storage and solver settings.
#[derive(Debug, Clone)]
pub struct SvmOptions {
    pub smo: SmoOptions,
    /// Problems up to this many rows use a fully materialized Gram matrix.
    pub dense_limit: usize,
    /// Row-cache budget for larger problems.
    pub cache_bytes: usize,
}

impl Default for SvmOptions {
    fn default() -> Self {
        Self { smo: SmoOptions::default(), dense_limit: 2_000, cache_bytes: 512 << 20 }
    }
}

/// A trained model plus the full dual solution, for KKT inspection.
#[derive(Debug, Clone)]
pub struct SvmFit {
    pub model: SvmModel,
    pub alpha: Vec<f64>,
    pub targets: Vec<f64>,
    pub upper: Vec<f64>,
    pub solution: SmoSolution,
}

impl SvmFit {
    /// Largest KKT residual over the training rows, recomputing each
    /// decision value from the stored model.
    pub fn kkt_residual(&self, x: &Matrix) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for (i, row) in x.iter_rows().enumerate() {
            let f = self.model.decision_value(row)?;
            // Margin relative to the target level of the formulation.
            let m = match self.model.variant {
                SvmVariant::Ocsvm => f,
                _ => self.targets[i] * f - 1.0,
            };
            let a = self.alpha[i];
            let r = if a <= 0.0 {
                (-m).max(0.0)
            } else if a >= self.upper[i] {
                m.max(0.0)
            } else {
                m.abs()
            };
            worst = worst.max(r);
        }
        Ok(worst)
    }
}

fn solve_with(x: &Matrix, kernel: RbfKernel, prob: DualProblem<'_>, opts: &SvmOptions) -> Result<SmoSolution> {
    if x.rows <= opts.dense_limit {
        let mut g = DenseGram::from_kernel(x, &kernel);
        solve_dual(&mut g as &mut dyn Gram, prob, &opts.smo)
    } else {
        let mut g = CachedGram::new(x, kernel, opts.cache_bytes);
        solve_dual(&mut g as &mut dyn Gram, prob, &opts.smo)
    }
}

fn build_model(
    x: &Matrix,
    variant: SvmVariant,
    hyperparams: SvmHyperparams,
    kernel: RbfKernel,
    sol: &SmoSolution,
    y: &[f64],
    opts: &SvmOptions,
) -> SvmModel {
    let mut support_vectors = Vec::new();
    let mut coefficients = Vec::new();
    for (i, &a) in sol.alpha.iter().enumerate() {
        if a > 0.0 {
            support_vectors.push(x.row(i).to_vec());
            coefficients.push(y[i] * a);
        }
    }
    let offset = match variant {
        SvmVariant::Ocsvm => sol.rho,
        _ => -sol.rho,
    };
    SvmModel {
        version: SVM_FORMAT_VERSION,
        variant,
        support_vectors,
        coefficients,
        offset,
        kernel,
        hyperparams,
        diagnostics: SolverDiagnostics {
            iterations: sol.iterations,
            max_violation: sol.max_violation,
            objective: sol.objective,
            tolerance: opts.smo.tolerance,
        },
    }
}

fn check_two_class(pos: &Dataset, other: &Dataset) -> Result<()> {
    if pos.is_empty() || other.is_empty() {
        return param("both training classes must be non-empty");
    }
    if pos.dim() != other.dim() {
        return param("training classes have different feature counts");
    }
    Ok(())
}

fn check_penalty(name: &str, c: f64) -> Result<()> {
    if !(c > 0.0 && c.is_finite()) {
        return param(format!("{name} must be positive, got {c}"));
    }
    Ok(())
}

fn fit_two_class(
    pos: &Dataset,
    other: &Dataset,
    c_plus: f64,
    c_minus: f64,
    gamma: f64,
    variant: SvmVariant,
    hyperparams: SvmHyperparams,
    opts: &SvmOptions,
) -> Result<SvmFit> {
    check_two_class(pos, other)?;
    check_penalty("C+", c_plus)?;
    check_penalty("C-", c_minus)?;
    let kernel = RbfKernel::new(gamma)?;
    let x = pos.feature_matrix().vstack(&other.feature_matrix());
    let mut y = vec![1.0; pos.len()];
    y.extend(std::iter::repeat(-1.0).take(other.len()));
    let mut upper = vec![c_plus; pos.len()];
    upper.extend(std::iter::repeat(c_minus).take(other.len()));
    let p = vec![-1.0; x.rows];
    let sol = solve_with(&x, kernel, DualProblem { y: &y, p: &p, upper: &upper, alpha0: vec![0.0; x.rows] }, opts)?;
    let model = build_model(&x, variant, hyperparams, kernel, &sol, &y, opts);
    Ok(SvmFit { model, alpha: sol.alpha.clone(), targets: y, upper, solution: sol })
}

pub fn fit_csvc(pos: &Dataset, neg: &Dataset, c: f64, gamma: f64, opts: &SvmOptions) -> Result<SvmFit> {
    fit_two_class(pos, neg, c, c, gamma, SvmVariant::Csvc, SvmHyperparams::Csvc { c }, opts)
}

pub fn fit_bsvm(pos: &Dataset, background: &Dataset, c_plus: f64, c_minus: f64, gamma: f64, opts: &SvmOptions) -> Result<SvmFit> {
    fit_two_class(pos, background, c_plus, c_minus, gamma, SvmVariant::Bsvm, SvmHyperparams::Bsvm { c_plus, c_minus }, opts)
}

pub fn fit_ocsvm(pos: &Dataset, nu: f64, gamma: f64, opts: &SvmOptions) -> Result<SvmFit> {
    if pos.is_empty() {
        return param("one-class SVM needs at least one positive");
    }
    if !(nu > 0.0 && nu < 1.0) {
        return param(format!("nu {nu} outside (0, 1)"));
    }
    let kernel = RbfKernel::new(gamma)?;
    let x = pos.feature_matrix();
    let n = x.rows;
    // Solved with bounds [0, 1] and Σα = νn so the stopping tolerance has the
    // same meaning for every ν and n, then rescaled to Σα = 1.
    let total = nu * n as f64;
    let full = (total.floor() as usize).min(n);
    let mut alpha0 = vec![0.0; n];
    for a in alpha0.iter_mut().take(full) {
        *a = 1.0;
    }
    if full < n {
        alpha0[full] = total - full as f64;
    }
    let y = vec![1.0; n];
    let p = vec![0.0; n];
    let ones = vec![1.0; n];
    let mut sol = solve_with(&x, kernel, DualProblem { y: &y, p: &p, upper: &ones, alpha0 }, opts)?;
    let scale = 1.0 / total;
    sol.alpha.iter_mut().for_each(|a| *a *= scale);
    sol.gradient.iter_mut().for_each(|g| *g *= scale);
    sol.rho *= scale;
    sol.objective *= scale * scale;
    let upper = vec![scale; n];
    let model = build_model(&x, SvmVariant::Ocsvm, SvmHyperparams::Ocsvm { nu }, kernel, &sol, &y, opts);
    Ok(SvmFit { model, alpha: sol.alpha.clone(), targets: y, upper, solution: sol })
}

pub fn train_csvc(pos: &Dataset, neg: &Dataset, c: f64, gamma: f64) -> Result<SvmModel> {
    fit_csvc(pos, neg, c, gamma, &SvmOptions::default()).map(|f| f.model)
}

pub fn train_bsvm(pos: &Dataset, background: &Dataset, c_plus: f64, c_minus: f64, gamma: f64) -> Result<SvmModel> {
    fit_bsvm(pos, background, c_plus, c_minus, gamma, &SvmOptions::default()).map(|f| f.model)
}

pub fn train_ocsvm(pos: &Dataset, nu: f64, gamma: f64) -> Result<SvmModel> {
    fit_ocsvm(pos, nu, gamma, &SvmOptions::default()).map(|f| f.model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{LabelState, Sample};
    use crate::rng::SeededRng;

    fn cloud(n: usize, center: [f64; 2], spread: f64, seed: u64, label: LabelState) -> Dataset {
        let mut rng = SeededRng::new(seed);
        Dataset::new(
            vec!["a".into(), "b".into()],
            (0..n)
                .map(|i| {
                    Sample::new(
                        format!("{seed}-{i}"),
                        vec![center[0] + spread * rng.normal(), center[1] + spread * rng.normal()],
                        label,
                    )
                })
                .collect(),
        )
    }

    #[test]
    fn kernel_bounds() {
        let k = RbfKernel::new(0.7).unwrap();
        assert_eq!(k.eval(&[0.3, 0.2], &[0.3, 0.2]), 1.0);
        let v = k.eval(&[0.0, 0.0], &[1.0, 1.0]);
        assert!(v > 0.0 && v < 1.0);
        assert!(RbfKernel::new(0.0).is_err());
    }

    #[test]
    fn separable_clusters_fit_exactly() {
        let pos = cloud(60, [0.8, 0.8], 0.05, 1, LabelState::positive());
        let neg = cloud(60, [0.2, 0.2], 0.05, 2, LabelState::negative());
        let fit = fit_csvc(&pos, &neg, 10.0, 2.0, &SvmOptions::default()).unwrap();
        let x = pos.feature_matrix().vstack(&neg.feature_matrix());
        let labels = fit.model.predict_labels(&x).unwrap();
        let correct = labels.iter().enumerate().filter(|(i, l)| (**l == 1) == (*i < 60)).count();
        assert!(correct as f64 / 120.0 >= 0.99);
        assert!(fit.model.coefficients.iter().sum::<f64>().abs() < 1e-8);
        assert!(fit.kkt_residual(&x).unwrap() <= 1e-3 + 1e-9);
    }

    #[test]
    fn tiny_penalty_keeps_coefficients_bounded() {
        let pos = cloud(20, [0.6, 0.6], 0.2, 3, LabelState::positive());
        let neg = cloud(30, [0.4, 0.4], 0.2, 4, LabelState::negative());
        let m = train_csvc(&pos, &neg, 1e-6, 1.0).unwrap();
        assert!(m.coefficients.iter().all(|c| c.abs() <= 1e-6 + 1e-18));
    }

    #[test]
    fn equal_penalties_reduce_to_csvc() {
        let pos = cloud(25, [0.6, 0.5], 0.15, 5, LabelState::positive());
        let neg = cloud(40, [0.4, 0.5], 0.15, 6, LabelState::background());
        let a = train_csvc(&pos, &neg, 2.0, 1.5).unwrap();
        let b = train_bsvm(&pos, &neg, 2.0, 2.0, 1.5).unwrap();
        assert_eq!(a.coefficients, b.coefficients);
        assert_eq!(a.offset, b.offset);
        assert!(train_bsvm(&pos.empty_like(), &neg, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn ocsvm_single_point_contains_itself() {
        let one = cloud(1, [0.5, 0.5], 0.0, 7, LabelState::positive());
        let m = train_ocsvm(&one, 0.5, 1.0).unwrap();
        assert!(m.decision_value(&[0.5, 0.5]).unwrap() >= 0.0);
    }

    #[test]
    fn ocsvm_simplex_constraint() {
        let pos = cloud(100, [0.5, 0.5], 0.1, 8, LabelState::positive());
        let fit = fit_ocsvm(&pos, 0.1, 5.0, &SvmOptions::default()).unwrap();
        let total: f64 = fit.alpha.iter().sum();
        assert!((total - 1.0).abs() < 1e-8);
        assert!(fit.alpha.iter().all(|a| *a >= 0.0 && *a <= 1.0 / 10.0 + 1e-12));
        let x = pos.feature_matrix();
        let outliers = fit.model.decision_values(&x).unwrap().iter().filter(|f| **f < 0.0).count();
        assert!(outliers <= 10 + 1);
        assert!(fit.kkt_residual(&x).unwrap() <= 1e-3 + 1e-9);
    }

    #[test]
    fn symmetric_midpoint_ties_to_positive() {
        let pos = Dataset::new(vec!["a".into()], vec![Sample::new("p", vec![1.0], LabelState::positive())]);
        let neg = Dataset::new(vec!["a".into()], vec![Sample::new("n", vec![-1.0], LabelState::negative())]);
        let m = train_csvc(&pos, &neg, 100.0, 0.5).unwrap();
        assert!(m.decision_value(&[0.0]).unwrap().abs() < 1e-12);
        assert_eq!(m.predict_label(&[0.0]).unwrap(), 1);
        assert!(m.decision_value(&[0.0, 1.0]).is_err());
    }

    #[test]
    fn batch_matches_single() {
        let pos = cloud(30, [0.7, 0.3], 0.1, 9, LabelState::positive());
        let neg = cloud(30, [0.3, 0.7], 0.1, 10, LabelState::negative());
        let m = train_csvc(&pos, &neg, 1.0, 1.0).unwrap();
        let probe = cloud(50, [0.5, 0.5], 0.3, 11, LabelState::background()).feature_matrix();
        let batch = m.decision_values(&probe).unwrap();
        for (i, row) in probe.iter_rows().enumerate() {
            assert_eq!(batch[i], m.decision_value(row).unwrap());
        }
    }

    #[test]
    fn cached_and_dense_paths_agree() {
        let pos = cloud(40, [0.6, 0.4], 0.15, 12, LabelState::positive());
        let neg = cloud(40, [0.4, 0.6], 0.15, 13, LabelState::negative());
        let dense = fit_csvc(&pos, &neg, 1.0, 2.0, &SvmOptions::default()).unwrap();
        let cached_opts = SvmOptions { dense_limit: 0, cache_bytes: 10 * 80 * 8, ..Default::default() };
        let cached = fit_csvc(&pos, &neg, 1.0, 2.0, &cached_opts).unwrap();
        for (a, b) in dense.alpha.iter().zip(&cached.alpha) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}
