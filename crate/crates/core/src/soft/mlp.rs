//! Backpropagation multilayer perceptron with tanh hidden units and a
//! sigmoid output, trained on binary cross-entropy plus an L2 penalty on
//! the weights (biases are not penalized).
//!
//! A model is an ensemble of independently seeded networks whose score is
//! the arithmetic mean of the member outputs.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Matrix};
use crate::error::{param, Error, Result};
use crate::optim::{minimize, LbfgsConfig};
use crate::rng::{derive_seed, SeededRng};

use super::logistic::{check_targets, sigmoid, softplus};
use super::{positive_targets, SoftParams, TrainedSoftModel, TrainingSummary, MODEL_FORMAT_VERSION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpConfig {
    pub hidden_units: usize,
    pub hidden_layers: usize,
    pub ensemble_size: usize,
    /// Maximum full-batch optimizer iterations per member.
    pub epochs: usize,
    /// Length of the first step (largest-component displacement).
    pub learning_rate: f64,
    pub l2_penalty: f64,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden_units: 10,
            hidden_layers: 1,
            ensemble_size: 5,
            epochs: 500,
            learning_rate: 0.01,
            l2_penalty: 1e-4,
            seed: 0,
        }
    }
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_units == 0 || self.hidden_layers == 0 {
            return param("hidden_units and hidden_layers must be at least 1");
        }
        if self.ensemble_size == 0 {
            return param("ensemble_size must be at least 1");
        }
        if !(self.learning_rate > 0.0) || !(self.l2_penalty >= 0.0) {
            return param("learning_rate must be positive and l2_penalty non-negative");
        }
        Ok(())
    }

    pub fn sizes(&self, input_dim: usize) -> Vec<usize> {
        let mut sizes = vec![input_dim];
        sizes.extend(std::iter::repeat(self.hidden_units).take(self.hidden_layers));
        sizes.push(1);
        sizes
    }
}

/// View of a flat parameter vector as a layered network. Layer `l` stores
/// its `out x in` weight matrix row-major followed by its `out` biases.
pub struct Network<'a> {
    sizes: &'a [usize],
    params: &'a [f64],
}

impl<'a> Network<'a> {
    pub fn new(sizes: &'a [usize], params: &'a [f64]) -> Self {
        debug_assert_eq!(params.len(), Self::param_count(sizes));
        Self { sizes, params }
    }

    pub fn param_count(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Output pre-activation.
    pub fn logit(&self, x: &[f64]) -> f64 {
        let mut act = x.to_vec();
        let mut next = Vec::new();
        let mut off = 0;
        let last = self.sizes.len() - 2;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &self.params[off..off + n_in * n_out];
            let bias = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_in * n_out + n_out;
            next.clear();
            for o in 0..n_out {
                let z = bias[o] + dot(&weights[o * n_in..(o + 1) * n_in], &act);
                next.push(if l == last { z } else { z.tanh() });
            }
            std::mem::swap(&mut act, &mut next);
        }
        act[0]
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Mean cross-entropy plus `0.5 * l2 * ‖W‖²`, with its gradient.
pub(crate) fn loss_and_grad(sizes: &[usize], params: &[f64], x: &Matrix, targets: &[f64], l2: f64, grad: &mut [f64]) -> f64 {
    grad.iter_mut().for_each(|g| *g = 0.0);
    let n_layers = sizes.len() - 1;
    let mut offsets = Vec::with_capacity(n_layers);
    let mut off = 0;
    for w in sizes.windows(2) {
        offsets.push(off);
        off += w[0] * w[1] + w[1];
    }
    let inv_n = 1.0 / x.rows as f64;
    // acts[l] is the input to layer l; acts[n_layers] holds the logit.
    let mut acts: Vec<Vec<f64>> = sizes.iter().map(|&s| vec![0.0; s]).collect();
    let mut deltas: Vec<Vec<f64>> = sizes.iter().map(|&s| vec![0.0; s]).collect();
    let mut loss = 0.0;

    for (row, &t) in x.iter_rows().zip(targets) {
        acts[0].copy_from_slice(row);
        for l in 0..n_layers {
            let (n_in, n_out) = (sizes[l], sizes[l + 1]);
            let o = offsets[l];
            let (before, after) = acts.split_at_mut(l + 1);
            let input = &before[l];
            let output = &mut after[0];
            for k in 0..n_out {
                let z = params[o + n_in * n_out + k] + dot(&params[o + k * n_in..o + (k + 1) * n_in], input);
                output[k] = if l + 1 == n_layers { z } else { z.tanh() };
            }
        }
        let z = acts[n_layers][0];
        loss += softplus(z) - t * z;
        deltas[n_layers][0] = (sigmoid(z) - t) * inv_n;

        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (sizes[l], sizes[l + 1]);
            let o = offsets[l];
            let (dlo, dhi) = deltas.split_at_mut(l + 1);
            let delta_out = &dhi[0];
            let delta_in = &mut dlo[l];
            let input = &acts[l];
            for k in 0..n_out {
                let d = delta_out[k];
                if d == 0.0 {
                    continue;
                }
                grad[o + n_in * n_out + k] += d;
                let gw = &mut grad[o + k * n_in..o + (k + 1) * n_in];
                for (g, a) in gw.iter_mut().zip(input) {
                    *g += d * a;
                }
            }
            if l > 0 {
                for j in 0..n_in {
                    let mut s = 0.0;
                    for k in 0..n_out {
                        s += params[o + k * n_in + j] * delta_out[k];
                    }
                    // tanh' = 1 - tanh²
                    delta_in[j] = s * (1.0 - input[j] * input[j]);
                }
            }
        }
    }
    loss *= inv_n;
    for (l, w) in sizes.windows(2).enumerate() {
        let o = offsets[l];
        for i in o..o + w[0] * w[1] {
            loss += 0.5 * l2 * params[i] * params[i];
            grad[i] += l2 * params[i];
        }
    }
    loss
}

fn init_params(sizes: &[usize], seed: u64) -> Vec<f64> {
    let mut rng = SeededRng::new(seed);
    let mut p = Vec::with_capacity(Network::param_count(sizes));
    for w in sizes.windows(2) {
        let bound = 1.0 / (w[0] as f64).sqrt();
        for _ in 0..w[0] * w[1] + w[1] {
            p.push(rng.uniform_in(-bound, bound));
        }
    }
    p
}

pub fn train_mlp_matrix(x: &Matrix, targets: &[f64], cfg: &MlpConfig) -> Result<TrainedSoftModel> {
    cfg.validate()?;
    check_targets(x.rows, targets)?;
    let sizes = cfg.sizes(x.cols);
    let lbfgs = LbfgsConfig {
        max_iterations: cfg.epochs,
        grad_tol: 1e-6,
        rel_tol: 1e-10,
        initial_step: cfg.learning_rate,
        ..Default::default()
    };
    let mut members = Vec::with_capacity(cfg.ensemble_size);
    let mut seeds = Vec::with_capacity(cfg.ensemble_size);
    let mut losses = Vec::new();
    let mut epochs_run = 0;
    // Members are independent streams combined in index order.
    for m in 0..cfg.ensemble_size {
        let seed = derive_seed(cfg.seed, &[m as u64]);
        let r = minimize(
            |p, g| loss_and_grad(&sizes, p, x, targets, cfg.l2_penalty, g),
            init_params(&sizes, seed),
            &lbfgs,
        );
        if !r.loss.is_finite() {
            return Err(Error::Divergence(format!("member {m} loss became {}", r.loss)));
        }
        epochs_run = epochs_run.max(r.iterations);
        losses.push(r.loss);
        members.push(r.x);
        seeds.push(seed);
    }
    Ok(TrainedSoftModel {
        version: MODEL_FORMAT_VERSION,
        input_dim: x.cols,
        params: SoftParams::MlpEnsemble { sizes, members, seeds },
        training_summary: TrainingSummary {
            final_loss: losses.iter().sum::<f64>() / losses.len() as f64,
            epochs_run,
            converged: epochs_run < cfg.epochs,
        },
    })
}

pub fn train_mlp(data: &Dataset, targets: &[f64], cfg: &MlpConfig) -> Result<TrainedSoftModel> {
    if data.dim() == 0 {
        return param("dataset has no features");
    }
    train_mlp_matrix(&data.feature_matrix(), targets, cfg)
}

/// Largest relative difference between the backprop gradient and central
/// finite differences (step 1e-5) over every parameter of a freshly
/// initialized network. Relative error uses `max(|a|, |n|, 1e-6)` as the
/// denominator so that exactly-zero components do not divide by zero.
pub fn gradient_check_with_targets(cfg: &MlpConfig, batch: &Matrix, targets: &[f64]) -> f64 {
    let sizes = cfg.sizes(batch.cols);
    let params = init_params(&sizes, derive_seed(cfg.seed, &[0]));
    let mut analytic = vec![0.0; params.len()];
    loss_and_grad(&sizes, &params, batch, targets, cfg.l2_penalty, &mut analytic);
    let h = 1e-5;
    let mut scratch = vec![0.0; params.len()];
    let mut p = params.clone();
    let mut worst: f64 = 0.0;
    for i in 0..params.len() {
        p[i] = params[i] + h;
        let up = loss_and_grad(&sizes, &p, batch, targets, cfg.l2_penalty, &mut scratch);
        p[i] = params[i] - h;
        let down = loss_and_grad(&sizes, &p, batch, targets, cfg.l2_penalty, &mut scratch);
        p[i] = params[i];
        let numeric = (up - down) / (2.0 * h);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    worst
}

/// [`gradient_check_with_targets`] with targets taken from the batch labels.
pub fn gradient_check(cfg: &MlpConfig, batch: &Dataset) -> f64 {
    gradient_check_with_targets(cfg, &batch.feature_matrix(), &positive_targets(batch))
}
