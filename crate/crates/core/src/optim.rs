//! Full-batch limited-memory BFGS with a halving backtracking line search.
//!
//! Every accepted step satisfies the Armijo condition, so the recorded loss
//! sequence is non-increasing.

#[derive(Debug, Clone)]
pub struct LbfgsConfig {
    pub max_iterations: usize,
    pub memory: usize,
    /// Stop when the largest gradient component falls below this.
    pub grad_tol: f64,
    /// Stop when the relative loss decrease of a step falls below this.
    pub rel_tol: f64,
    /// Length of the first trial step along the steepest-descent direction.
    pub initial_step: f64,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self { max_iterations: 500, memory: 8, grad_tol: 1e-6, rel_tol: 0.0, initial_step: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StopReason {
    GradientTolerance,
    RelativeDecrease,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Debug, Clone)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub loss: f64,
    pub grad_inf: f64,
    pub iterations: usize,
    pub stop: StopReason,
    /// Loss after each accepted iteration, starting with the initial loss.
    pub trace: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Minimizes `f`, which writes the gradient into its second argument and
/// returns the loss. Non-finite losses are reported through `loss`.
pub fn minimize<F>(mut f: F, x0: Vec<f64>, cfg: &LbfgsConfig) -> LbfgsResult
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut loss = f(&x, &mut g);
    let mut trace = vec![loss];
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut rho_hist: Vec<f64> = Vec::new();
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut dir = vec![0.0; n];
    let mut iterations = 0;

    let stop = loop {
        if !loss.is_finite() {
            break StopReason::LineSearchFailed;
        }
        if inf_norm(&g) <= cfg.grad_tol {
            break StopReason::GradientTolerance;
        }
        if iterations >= cfg.max_iterations {
            break StopReason::MaxIterations;
        }

        // Two-loop recursion.
        dir.copy_from_slice(&g);
        let m = s_hist.len();
        let mut alpha = vec![0.0; m];
        for k in (0..m).rev() {
            alpha[k] = rho_hist[k] * dot(&s_hist[k], &dir);
            for (d, y) in dir.iter_mut().zip(&y_hist[k]) {
                *d -= alpha[k] * y;
            }
        }
        let gamma = if m > 0 {
            dot(&s_hist[m - 1], &y_hist[m - 1]) / dot(&y_hist[m - 1], &y_hist[m - 1])
        } else {
            cfg.initial_step / inf_norm(&g).max(1e-300)
        };
        for d in dir.iter_mut() {
            *d *= gamma;
        }
        for k in 0..m {
            let beta = rho_hist[k] * dot(&y_hist[k], &dir);
            for (d, s) in dir.iter_mut().zip(&s_hist[k]) {
                *d += s * (alpha[k] - beta);
            }
        }
        for d in dir.iter_mut() {
            *d = -*d;
        }
        let mut slope = dot(&g, &dir);
        if slope >= 0.0 {
            // Not a descent direction; restart from steepest descent.
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            let scale = cfg.initial_step / inf_norm(&g).max(1e-300);
            for (d, gi) in dir.iter_mut().zip(&g) {
                *d = -gi * scale;
            }
            slope = dot(&g, &dir);
        }

        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            for i in 0..n {
                x_new[i] = x[i] + step * dir[i];
            }
            let l = f(&x_new, &mut g_new);
            if l.is_finite() && l <= loss + 1e-4 * step * slope {
                accepted = true;
                let mut s = vec![0.0; n];
                let mut y = vec![0.0; n];
                for i in 0..n {
                    s[i] = x_new[i] - x[i];
                    y[i] = g_new[i] - g[i];
                }
                let sy = dot(&s, &y);
                if sy > 1e-12 * dot(&y, &y).max(1e-300) {
                    if s_hist.len() == cfg.memory {
                        s_hist.remove(0);
                        y_hist.remove(0);
                        rho_hist.remove(0);
                    }
                    s_hist.push(s);
                    y_hist.push(y);
                    rho_hist.push(1.0 / sy);
                }
                let prev = loss;
                std::mem::swap(&mut x, &mut x_new);
                std::mem::swap(&mut g, &mut g_new);
                loss = l;
                trace.push(loss);
                iterations += 1;
                if cfg.rel_tol > 0.0 && (prev - loss) <= cfg.rel_tol * prev.abs().max(1.0) {
                    return LbfgsResult {
                        grad_inf: inf_norm(&g),
                        x,
                        loss,
                        iterations,
                        stop: StopReason::RelativeDecrease,
                        trace,
                    };
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break StopReason::LineSearchFailed;
        }
    };

    LbfgsResult { grad_inf: inf_norm(&g), x, loss, iterations, stop, trace }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock_converges() {
        let f = |x: &[f64], g: &mut [f64]| {
            let (a, b) = (x[0], x[1]);
            g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
            g[1] = 200.0 * (b - a * a);
            (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
        };
        let cfg = LbfgsConfig { max_iterations: 1000, grad_tol: 1e-8, ..Default::default() };
        let r = minimize(f, vec![-1.2, 1.0], &cfg);
        assert_eq!(r.stop, StopReason::GradientTolerance);
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6);
        assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn quadratic_hits_tolerance_fast() {
        let f = |x: &[f64], g: &mut [f64]| {
            let mut l = 0.0;
            for i in 0..x.len() {
                let w = (i + 1) as f64;
                g[i] = w * (x[i] - 1.0);
                l += 0.5 * w * (x[i] - 1.0).powi(2);
            }
            l
        };
        let r = minimize(f, vec![0.0; 10], &LbfgsConfig::default());
        assert_eq!(r.stop, StopReason::GradientTolerance);
        assert!(r.iterations < 50);
    }
}
