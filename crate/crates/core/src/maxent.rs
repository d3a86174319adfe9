//! Approximate maximum-entropy presence-background model.
//!
//! Presences (target 1) are contrasted with background (target 0) by an
//! L1-regularized logistic model over expanded features, fit with a
//! monotone accelerated proximal gradient method. The logistic output is the
//! model score.
//!
//! Expanded feature order: the linear block `x_1..x_K`, then the quadratic
//! block `x_1²..x_K²`, then products `x_i·x_j` for `i < j` in lexicographic
//! order. Blocks that are disabled are skipped.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Matrix};
use crate::error::{param, Error, Result};
use crate::pu::PresenceLabel;
use crate::soft::{logistic_loss_grad, SoftParams, TrainedSoftModel, TrainingSummary, MODEL_FORMAT_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureExpansion {
    pub linear: bool,
    pub quadratic: bool,
    pub product: bool,
}

impl Default for FeatureExpansion {
    fn default() -> Self {
        Self { linear: true, quadratic: true, product: false }
    }
}

impl FeatureExpansion {
    pub fn output_dim(&self, k: usize) -> usize {
        let mut d = 0;
        if self.linear {
            d += k;
        }
        if self.quadratic {
            d += k;
        }
        if self.product {
            d += k * k.saturating_sub(1) / 2;
        }
        d
    }

    pub fn expand(&self, x: &[f64]) -> Vec<f64> {
        let k = x.len();
        let mut out = Vec::with_capacity(self.output_dim(k));
        if self.linear {
            out.extend_from_slice(x);
        }
        if self.quadratic {
            out.extend(x.iter().map(|v| v * v));
        }
        if self.product {
            for i in 0..k {
                for j in i + 1..k {
                    out.push(x[i] * x[j]);
                }
            }
        }
        out
    }

    fn expand_matrix(&self, x: &Matrix) -> Matrix {
        let cols = self.output_dim(x.cols);
        let mut data = Vec::with_capacity(x.rows * cols);
        for r in x.iter_rows() {
            data.extend(self.expand(r));
        }
        Matrix { rows: x.rows, cols, data }
    }
}

pub fn expand_features(x: &[f64], cfg: &MaxentConfig) -> Vec<f64> {
    cfg.feature_expansion.expand(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaxentConfig {
    pub feature_expansion: FeatureExpansion,
    /// L1 weight on every expanded-feature coefficient (intercept excluded).
    pub regularization: f64,
    pub max_iterations: usize,
    /// Stop when the gradient-map infinity norm falls below this.
    pub tolerance: f64,
}

impl Default for MaxentConfig {
    fn default() -> Self {
        Self {
            feature_expansion: FeatureExpansion::default(),
            regularization: 1e-4,
            max_iterations: 2_000,
            tolerance: 1e-6,
        }
    }
}

/// Diagnostics of a maxent fit.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxentFit {
    pub model: TrainedSoftModel,
    /// Regularized objective after each iteration, starting at the initial point.
    pub objective_trace: Vec<f64>,
    pub converged: bool,
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

struct Problem<'a> {
    x: &'a Matrix,
    t: &'a [f64],
    lambda: f64,
}

impl Problem<'_> {
    /// Smooth part and its gradient; the last coordinate is the intercept.
    fn smooth(&self, p: &[f64], g: &mut [f64]) -> f64 {
        let k = self.x.cols;
        let (gw, gb) = g.split_at_mut(k);
        let mut b = 0.0;
        let l = logistic_loss_grad(self.x, self.t, &p[..k], p[k], gw, &mut b);
        gb[0] = b;
        l
    }

    fn penalty(&self, p: &[f64]) -> f64 {
        self.lambda * p[..self.x.cols].iter().map(|v| v.abs()).sum::<f64>()
    }

    fn prox(&self, y: &[f64], g: &[f64], step: f64, out: &mut [f64]) {
        let k = self.x.cols;
        for i in 0..k {
            out[i] = soft_threshold(y[i] - step * g[i], step * self.lambda);
        }
        out[k] = y[k] - step * g[k];
    }
}

pub fn train_maxent_fit(pos: &Dataset, background: &Dataset, cfg: &MaxentConfig) -> Result<MaxentFit> {
    if pos.is_empty() || background.is_empty() {
        return param("maxent needs non-empty presence and background sets");
    }
    if pos.dim() != background.dim() {
        return param("presence and background feature counts differ");
    }
    if !cfg.feature_expansion.linear {
        return param("the linear feature class must be enabled");
    }
    if !(cfg.regularization >= 0.0) {
        return param("regularization must be non-negative");
    }
    let raw = pos.feature_matrix().vstack(&background.feature_matrix());
    let x = cfg.feature_expansion.expand_matrix(&raw);
    let mut t = vec![1.0; pos.len()];
    t.extend(std::iter::repeat(0.0).take(background.len()));
    let prob = Problem { x: &x, t: &t, lambda: cfg.regularization };
    let n = x.cols + 1;

    // Monotone FISTA (Beck & Teboulle) with backtracking on the step.
    let mut p = vec![0.0; n];
    p[n - 1] = {
        let mean = pos.len() as f64 / t.len() as f64;
        (mean / (1.0 - mean)).ln()
    };
    let mut g = vec![0.0; n];
    let mut obj = prob.smooth(&p, &mut g) + prob.penalty(&p);
    let mut trace = vec![obj];
    let mut y = p.clone();
    let mut momentum: f64 = 1.0;
    let mut step = 1.0;
    let mut z = vec![0.0; n];
    let mut gy = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iterations {
        let fy = prob.smooth(&y, &mut gy);
        let mut fz;
        loop {
            prob.prox(&y, &gy, step, &mut z);
            fz = prob.smooth(&z, &mut scratch);
            let mut quad = fy;
            for i in 0..n {
                let d = z[i] - y[i];
                quad += gy[i] * d + d * d / (2.0 * step);
            }
            if fz <= quad + 1e-12 * fz.abs() || step < 1e-12 {
                break;
            }
            step *= 0.5;
        }
        if !fz.is_finite() {
            return Err(Error::Divergence("maxent objective became non-finite".into()));
        }
        // Gradient-map norm at y.
        let gmap = y.iter().zip(&z).fold(0.0f64, |m, (a, b)| m.max((a - b).abs() / step));
        let obj_z = fz + prob.penalty(&z);
        let prev = p.clone();
        if obj_z <= obj {
            p.copy_from_slice(&z);
            obj = obj_z;
        }
        let next_momentum = (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt()) / 2.0;
        for i in 0..n {
            y[i] = p[i]
                + (momentum / next_momentum) * (z[i] - p[i])
                + ((momentum - 1.0) / next_momentum) * (p[i] - prev[i]);
        }
        momentum = next_momentum;
        iterations += 1;
        trace.push(obj);
        if gmap <= cfg.tolerance {
            converged = true;
            break;
        }
        // Let the step recover after conservative backtracks.
        step *= 1.25;
    }

    let k = x.cols;
    let model = TrainedSoftModel {
        version: MODEL_FORMAT_VERSION,
        input_dim: raw.cols,
        params: SoftParams::Maxent {
            expansion: cfg.feature_expansion,
            weights: p[..k].to_vec(),
            intercept: p[k],
        },
        training_summary: TrainingSummary { final_loss: obj, epochs_run: iterations, converged },
    };
    Ok(MaxentFit { model, objective_trace: trace, converged })
}

pub fn train_maxent(pos: &Dataset, background: &Dataset, cfg: &MaxentConfig) -> Result<TrainedSoftModel> {
    train_maxent_fit(pos, background, cfg).map(|f| f.model)
}

/// Presence iff the logistic output is at least `threshold`.
pub fn maxent_classify(model: &TrainedSoftModel, x: &[f64], threshold: f64) -> Result<PresenceLabel> {
    Ok(PresenceLabel::from_probability(model.predict_score(x)?, threshold))
}
