use crate::data::{Dataset, Matrix};
use crate::error::{param, Error, Result};
use crate::optim::{minimize, LbfgsConfig, StopReason};

use super::{SoftParams, TrainedSoftModel, TrainingSummary, MODEL_FORMAT_VERSION};

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^z) without overflow.
#[inline]
pub(crate) fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Mean binary cross-entropy of a linear logit model; writes the gradient
/// with respect to the weights and the intercept.
pub fn logistic_loss_grad(
    x: &Matrix,
    targets: &[f64],
    weights: &[f64],
    intercept: f64,
    grad_w: &mut [f64],
    grad_b: &mut f64,
) -> f64 {
    grad_w.iter_mut().for_each(|g| *g = 0.0);
    *grad_b = 0.0;
    let inv_n = 1.0 / x.rows as f64;
    let mut loss = 0.0;
    for (row, &t) in x.iter_rows().zip(targets) {
        let z = intercept + row.iter().zip(weights).map(|(a, w)| a * w).sum::<f64>();
        loss += softplus(z) - t * z;
        let d = (sigmoid(z) - t) * inv_n;
        *grad_b += d;
        for (g, a) in grad_w.iter_mut().zip(row) {
            *g += d * a;
        }
    }
    loss * inv_n
}

pub(crate) fn check_targets(rows: usize, targets: &[f64]) -> Result<()> {
    if rows == 0 {
        return param("cannot train on an empty dataset");
    }
    if targets.len() != rows {
        return param(format!("{} targets for {} samples", targets.len(), rows));
    }
    if targets.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return param("targets must lie in [0, 1]");
    }
    Ok(())
}

/// L2-penalized logistic regression fit to stationarity
/// (`‖∇‖∞ ≤ 1e-6`). The intercept is not penalized and the start point is
/// zero, so the result is deterministic.
pub fn train_logistic_matrix(x: &Matrix, targets: &[f64], l2_penalty: f64) -> Result<TrainedSoftModel> {
    check_targets(x.rows, targets)?;
    if !(l2_penalty >= 0.0) {
        return param("l2_penalty must be non-negative");
    }
    let k = x.cols;
    let objective = |p: &[f64], g: &mut [f64]| {
        let (gw, gb) = g.split_at_mut(k);
        let mut b = 0.0;
        let mut loss = logistic_loss_grad(x, targets, &p[..k], p[k], gw, &mut b);
        gb[0] = b;
        for (gi, wi) in gw.iter_mut().zip(&p[..k]) {
            *gi += l2_penalty * wi;
            loss += 0.5 * l2_penalty * wi * wi;
        }
        loss
    };
    let cfg = LbfgsConfig { max_iterations: 5_000, grad_tol: 1e-6, ..Default::default() };
    let r = minimize(objective, vec![0.0; k + 1], &cfg);
    if !r.loss.is_finite() {
        return Err(Error::Divergence(format!("logistic loss became {}", r.loss)));
    }
    let weights = r.x[..k].to_vec();
    Ok(TrainedSoftModel {
        version: MODEL_FORMAT_VERSION,
        input_dim: k,
        params: SoftParams::Logistic { weights, intercept: r.x[k] },
        training_summary: TrainingSummary {
            final_loss: r.loss,
            epochs_run: r.iterations,
            converged: r.stop == StopReason::GradientTolerance,
        },
    })
}

pub fn train_logistic(data: &Dataset, targets: &[f64], l2_penalty: f64) -> Result<TrainedSoftModel> {
    train_logistic_matrix(&data.feature_matrix(), targets, l2_penalty)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn weights(m: &TrainedSoftModel) -> (Vec<f64>, f64) {
        match &m.params {
            SoftParams::Logistic { weights, intercept } => (weights.clone(), *intercept),
            _ => unreachable!(),
        }
    }

    #[test]
    fn recovers_bayes_boundary_of_two_gaussians() {
        // N(0,1) vs N(2,1), balanced: Bayes log-odds is 2x - 2, boundary x = 1.
        let mut rng = SeededRng::new(11);
        let n = 20_000;
        let mut rows = Vec::new();
        let mut t = Vec::new();
        for i in 0..n {
            let pos = i % 2 == 0;
            rows.push(vec![if pos { 2.0 } else { 0.0 } + rng.normal()]);
            t.push(if pos { 1.0 } else { 0.0 });
        }
        let m = train_logistic_matrix(&Matrix::from_rows(&rows), &t, 0.0).unwrap();
        assert!(m.training_summary.converged);
        let (w, b) = weights(&m);
        let boundary = -b / w[0];
        assert!((boundary - 1.0).abs() < 0.1, "boundary {boundary}");
    }

    #[test]
    fn constant_balanced_features_score_half() {
        let rows = vec![vec![0.5, 0.5]; 10];
        let t: Vec<f64> = (0..10).map(|i| (i % 2) as f64).collect();
        let m = train_logistic_matrix(&Matrix::from_rows(&rows), &t, 1e-3).unwrap();
        assert!((m.predict_score(&[0.5, 0.5]).unwrap() - 0.5).abs() < 1e-6);
    }

    #[test]
    fn stronger_penalty_never_grows_weights() {
        let mut rng = SeededRng::new(2);
        let rows: Vec<Vec<f64>> = (0..300).map(|_| (0..3).map(|_| rng.uniform()).collect()).collect();
        let t: Vec<f64> = rows.iter().map(|r| if r[0] + 0.5 * r[1] + 0.2 * rng.normal() > 0.7 { 1.0 } else { 0.0 }).collect();
        let x = Matrix::from_rows(&rows);
        let mut last = f64::INFINITY;
        for l2 in [1e-4, 2e-4, 4e-4, 8e-4, 1.6e-3, 3.2e-3, 6.4e-3] {
            let (w, _) = weights(&train_logistic_matrix(&x, &t, l2).unwrap());
            let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(norm <= last + 1e-6, "norm grew at l2 = {l2}");
            last = norm;
        }
    }

    #[test]
    fn rejects_misaligned_targets() {
        let x = Matrix::from_rows(&[vec![0.0], vec![1.0]]);
        assert!(train_logistic_matrix(&x, &[1.0], 0.0).is_err());
        assert!(train_logistic_matrix(&x, &[1.0, 2.0], 0.0).is_err());
    }
}
