//! Sequential minimal optimization for the box- and equality-constrained
//! dual QPs behind C-SVC, biased SVM and the one-class SVM:
//!
//! ```text
//! minimize    ½ αᵀQα + pᵀα
//! subject to  yᵀα = Δ,  0 ≤ α_i ≤ C_i,   Q_ij = y_i y_j K_ij
//! ```
//!
//! The working pair is the maximal violating `i` combined with the `j`
//! giving the largest second-order decrease (Fan, Chen & Lin 2005). The
//! solver stops once the maximal KKT violation `m(α) − M(α)` is at most the
//! tolerance.

use std::collections::HashMap;
use std::rc::Rc;

use crate::data::Matrix;
use crate::error::{param, Error, Result};

use super::RbfKernel;

const TAU: f64 = 1e-12;

/// Source of kernel matrix rows.
pub trait Gram {
    fn len(&self) -> usize;
    fn row(&mut self, i: usize) -> Rc<Vec<f64>>;
    fn diag(&self, i: usize) -> f64;
}

/// Fully materialized kernel matrix.
pub struct DenseGram {
    n: usize,
    rows: Vec<Rc<Vec<f64>>>,
}

impl DenseGram {
    pub fn new(values: Vec<Vec<f64>>) -> Result<Self> {
        let n = values.len();
        if values.iter().any(|r| r.len() != n) {
            return param("Gram matrix must be square");
        }
        Ok(Self { n, rows: values.into_iter().map(Rc::new).collect() })
    }

    pub fn from_kernel(x: &Matrix, kernel: &RbfKernel) -> Self {
        let n = x.rows;
        let mut rows = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..=i {
                let v = kernel.eval(x.row(i), x.row(j));
                rows[i][j] = v;
                rows[j][i] = v;
            }
        }
        Self { n, rows: rows.into_iter().map(Rc::new).collect() }
    }
}

impl Gram for DenseGram {
    fn len(&self) -> usize {
        self.n
    }
    fn row(&mut self, i: usize) -> Rc<Vec<f64>> {
        Rc::clone(&self.rows[i])
    }
    fn diag(&self, i: usize) -> f64 {
        self.rows[i][i]
    }
}

/// RBF kernel rows computed on demand and kept in a least-recently-used
/// cache bounded by `cache_bytes`.
pub struct CachedGram<'a> {
    x: &'a Matrix,
    kernel: RbfKernel,
    norms: Vec<f64>,
    cache: HashMap<usize, (Rc<Vec<f64>>, u64)>,
    capacity: usize,
    clock: u64,
}

impl<'a> CachedGram<'a> {
    pub fn new(x: &'a Matrix, kernel: RbfKernel, cache_bytes: usize) -> Self {
        let row_bytes = (x.rows * 8).max(1);
        let norms = x.iter_rows().map(|r| r.iter().map(|v| v * v).sum()).collect();
        Self {
            x,
            kernel,
            norms,
            cache: HashMap::new(),
            capacity: (cache_bytes / row_bytes).max(2),
            clock: 0,
        }
    }
}

impl Gram for CachedGram<'_> {
    fn len(&self) -> usize {
        self.x.rows
    }

    fn row(&mut self, i: usize) -> Rc<Vec<f64>> {
        self.clock += 1;
        if let Some(entry) = self.cache.get_mut(&i) {
            entry.1 = self.clock;
            return Rc::clone(&entry.0);
        }
        if self.cache.len() >= self.capacity {
            let oldest = *self.cache.iter().min_by_key(|(_, (_, t))| *t).map(|(k, _)| k).unwrap();
            self.cache.remove(&oldest);
        }
        let xi = self.x.row(i);
        let ni = self.norms[i];
        let g = self.kernel.gamma;
        let row: Vec<f64> = self
            .x
            .iter_rows()
            .zip(&self.norms)
            .map(|(xj, nj)| {
                let cross: f64 = xi.iter().zip(xj).map(|(a, b)| a * b).sum();
                (-g * (ni + nj - 2.0 * cross).max(0.0)).exp()
            })
            .collect();
        let row = Rc::new(row);
        self.cache.insert(i, (Rc::clone(&row), self.clock));
        row
    }

    fn diag(&self, _i: usize) -> f64 {
        1.0
    }
}

#[derive(Debug, Clone)]
pub struct SmoOptions {
    pub tolerance: f64,
    /// Iteration budget in units of `n` pair updates.
    pub max_passes: usize,
}

impl Default for SmoOptions {
    fn default() -> Self {
        Self { tolerance: 1e-3, max_passes: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoSolution {
    pub alpha: Vec<f64>,
    /// `ρ` of the decision function `Σ α_i y_i K(x_i, x) − ρ`.
    pub rho: f64,
    /// Gradient `Qα + p` at the solution.
    pub gradient: Vec<f64>,
    /// Value of `½ αᵀQα + pᵀα`.
    pub objective: f64,
    pub iterations: usize,
    /// Final `m(α) − M(α)`.
    pub max_violation: f64,
}

/// The general dual problem. `alpha0` must be feasible.
pub struct DualProblem<'a> {
    pub y: &'a [f64],
    pub p: &'a [f64],
    pub upper: &'a [f64],
    pub alpha0: Vec<f64>,
}

fn is_up(y: f64, a: f64, c: f64) -> bool {
    if y > 0.0 { a < c } else { a > 0.0 }
}

fn is_low(y: f64, a: f64, c: f64) -> bool {
    if y > 0.0 { a > 0.0 } else { a < c }
}

pub fn solve_dual(gram: &mut dyn Gram, prob: DualProblem<'_>, opts: &SmoOptions) -> Result<SmoSolution> {
    let n = gram.len();
    let DualProblem { y, p, upper, alpha0 } = prob;
    if y.len() != n || p.len() != n || upper.len() != n || alpha0.len() != n {
        return param("dual problem dimensions disagree with the Gram matrix");
    }
    if upper.iter().any(|c| !(*c > 0.0)) {
        return param("penalties must be positive");
    }
    if y.iter().any(|v| *v != 1.0 && *v != -1.0) {
        return param("targets must be +1 or -1");
    }
    let mut alpha = alpha0;
    let mut grad = p.to_vec();
    for i in 0..n {
        if alpha[i] != 0.0 {
            let row = gram.row(i);
            for t in 0..n {
                grad[t] += alpha[i] * y[i] * y[t] * row[t];
            }
        }
    }

    let mut iterations = 0;
    let mut violation;
    loop {
        // Select i: maximal -y_t G_t over I_up.
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..n {
            if is_up(y[t], alpha[t], upper[t]) {
                let v = -y[t] * grad[t];
                if v > gmax {
                    gmax = v;
                    i_sel = Some(t);
                }
            }
        }
        let mut gmin = f64::INFINITY;
        for t in 0..n {
            if is_low(y[t], alpha[t], upper[t]) {
                gmin = gmin.min(-y[t] * grad[t]);
            }
        }
        violation = if i_sel.is_some() && gmin.is_finite() { gmax - gmin } else { 0.0 };
        if violation <= opts.tolerance {
            break;
        }
        if iterations >= opts.max_passes.saturating_mul(n.max(1)) {
            return Err(Error::Convergence { iterations, violation });
        }
        let i = i_sel.unwrap();
        let row_i = gram.row(i);
        let kii = gram.diag(i);

        // Select j by second-order gain among violating I_low members.
        let mut best = f64::INFINITY;
        let mut j_sel = None;
        for t in 0..n {
            if !is_low(y[t], alpha[t], upper[t]) {
                continue;
            }
            let b = gmax + y[t] * grad[t];
            if b > 0.0 {
                let a = kii + gram.diag(t) - 2.0 * row_i[t];
                let a = if a > 0.0 { a } else { TAU };
                let gain = -(b * b) / a;
                if gain < best {
                    best = gain;
                    j_sel = Some(t);
                }
            }
        }
        let j = match j_sel {
            Some(j) => j,
            None => break,
        };
        let row_j = gram.row(j);
        iterations += 1;

        let (ci, cj) = (upper[i], upper[j]);
        let (old_ai, old_aj) = (alpha[i], alpha[j]);
        let quad = {
            let q = kii + gram.diag(j) - 2.0 * row_i[j];
            if q > 0.0 { q } else { TAU }
        };
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > ci - cj {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = ci - diff;
                }
            } else if alpha[j] > cj {
                alpha[j] = cj;
                alpha[i] = cj + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > ci {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = sum - ci;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > cj {
                if alpha[j] > cj {
                    alpha[j] = cj;
                    alpha[i] = sum - cj;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let dai = alpha[i] - old_ai;
        let daj = alpha[j] - old_aj;
        for t in 0..n {
            grad[t] += y[t] * (y[i] * dai * row_i[t] + y[j] * daj * row_j[t]);
        }
    }

    let rho = compute_rho(y, &alpha, upper, &grad);
    let objective = 0.5 * (0..n).map(|t| alpha[t] * (grad[t] + p[t])).sum::<f64>();
    Ok(SmoSolution { alpha, rho, gradient: grad, objective, iterations, max_violation: violation })
}

fn compute_rho(y: &[f64], alpha: &[f64], upper: &[f64], grad: &[f64]) -> f64 {
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut sum_free = 0.0;
    let mut n_free = 0usize;
    for t in 0..y.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= upper[t] {
            if y[t] < 0.0 { ub = ub.min(yg) } else { lb = lb.max(yg) }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 { ub = ub.min(yg) } else { lb = lb.max(yg) }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    if n_free > 0 {
        sum_free / n_free as f64
    } else if ub.is_finite() && lb.is_finite() {
        (ub + lb) / 2.0
    } else if ub.is_finite() {
        ub
    } else {
        lb
    }
}

/// C-SVC dual (`p = −1`, `Δ = 0`) with per-sample penalties, started from
/// `α = 0`. Returns the solution; coefficients are `y_i α_i` and the bias is
/// `−ρ`.
pub fn smo_solve(gram: &mut dyn Gram, targets: &[f64], penalties: &[f64], opts: &SmoOptions) -> Result<SmoSolution> {
    let n = gram.len();
    let p = vec![-1.0; n];
    solve_dual(gram, DualProblem { y: targets, p: &p, upper: penalties, alpha0: vec![0.0; n] }, opts)
}
