//! Reference implementations used as test oracles. They share no code with
//! the library solvers.
#![allow(dead_code)]

use oneclass_core::data::{Dataset, LabelState, Sample};

pub fn dataset(rows: &[Vec<f64>], label: LabelState) -> Dataset {
    let k = rows.first().map_or(0, Vec::len);
    let names = (1..=k).map(|j| format!("f{j}")).collect();
    let samples =
        rows.iter().enumerate().map(|(i, r)| Sample::new(format!("s{i}"), r.clone(), label.clone())).collect();
    Dataset::new(names, samples)
}

pub fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    (-gamma * a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()).exp()
}

/// `Q_ij = y_i y_j K(x_i, x_j)`.
pub fn signed_gram(rows: &[Vec<f64>], y: &[f64], gamma: f64) -> Vec<Vec<f64>> {
    rows.iter()
        .enumerate()
        .map(|(i, a)| rows.iter().enumerate().map(|(j, b)| y[i] * y[j] * rbf(a, b, gamma)).collect())
        .collect()
}

pub fn dual_objective(q: &[Vec<f64>], p: &[f64], a: &[f64]) -> f64 {
    let n = a.len();
    let mut v = 0.0;
    for i in 0..n {
        let qa: f64 = (0..n).map(|j| q[i][j] * a[j]).sum();
        v += 0.5 * a[i] * qa + p[i] * a[i];
    }
    v
}

/// Euclidean projection onto `{a : yᵀa = rhs, 0 ≤ a ≤ upper}` by bisection on
/// the multiplier of the equality constraint.
pub fn project(v: &[f64], y: &[f64], upper: &[f64], rhs: f64) -> Vec<f64> {
    let at = |lam: f64| -> Vec<f64> {
        v.iter().zip(y).zip(upper).map(|((vi, yi), ui)| (vi - lam * yi).clamp(0.0, *ui)).collect()
    };
    let h = |a: &[f64]| a.iter().zip(y).map(|(ai, yi)| ai * yi).sum::<f64>() - rhs;
    let span = v.iter().map(|x| x.abs()).fold(0.0, f64::max) + upper.iter().fold(0.0, |m: f64, u| m.max(*u)) + 1.0;
    let (mut lo, mut hi) = (-span, span);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        // h is non-increasing in the multiplier.
        if h(&at(mid)) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

/// Minimizes `½ aᵀQa + pᵀa` over `{yᵀa = rhs, 0 ≤ a ≤ upper}` with
/// accelerated projected gradient and adaptive restart.
pub fn qp_reference(q: &[Vec<f64>], p: &[f64], y: &[f64], upper: &[f64], rhs: f64) -> (Vec<f64>, f64) {
    let n = p.len();
    let lipschitz = q.iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(1e-12, f64::max);
    let step = 1.0 / lipschitz;
    let grad = |a: &[f64]| -> Vec<f64> { (0..n).map(|i| (0..n).map(|j| q[i][j] * a[j]).sum::<f64>() + p[i]).collect() };
    let mut x = project(&vec![0.0; n], y, upper, rhs);
    let mut z = x.clone();
    let mut t: f64 = 1.0;
    let mut best = dual_objective(q, p, &x);
    for _ in 0..50_000 {
        let g = grad(&z);
        let cand: Vec<f64> = z.iter().zip(&g).map(|(zi, gi)| zi - step * gi).collect();
        let nx = project(&cand, y, upper, rhs);
        let f = dual_objective(q, p, &nx);
        if f > best {
            // Restart momentum when the objective rises.
            z = x.clone();
            t = 1.0;
            continue;
        }
        let nt = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        z = nx.iter().zip(&x).map(|(a, b)| a + (t - 1.0) / nt * (a - b)).collect();
        let moved = nx.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        x = nx;
        t = nt;
        best = f;
        if moved < 1e-15 {
            break;
        }
    }
    (x, best)
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        for &k in &idx[i..=j] {
            r[k] = (i + j) as f64 / 2.0 + 1.0;
        }
        i = j + 1;
    }
    r
}

/// Pearson correlation of average ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (x, y) = (average_ranks(a), average_ranks(b));
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let cov: f64 = x.iter().zip(&y).map(|(p, q)| (p - mx) * (q - my)).sum();
    let vx: f64 = x.iter().map(|p| (p - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|q| (q - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

#[test]
fn spearman_oracle_known_values() {
    assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]) - 1.0).abs() < 1e-12);
    assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
    // Ranks (1, 2.5, 2.5, 4) against (1, 2, 3, 4).
    let expected = 4.5 / (4.5f64 * 5.0).sqrt();
    assert!((spearman(&[1.0, 2.0, 2.0, 3.0], &[1.0, 2.0, 3.0, 4.0]) - expected).abs() < 1e-12);
}

#[test]
fn projection_is_feasible() {
    let a = project(&[3.0, -1.0, 0.4, 0.2], &[1.0, -1.0, 1.0, -1.0], &[1.0; 4], 0.0);
    let s: f64 = a.iter().zip([1.0, -1.0, 1.0, -1.0]).map(|(x, y)| x * y).sum();
    assert!(s.abs() < 1e-9 && a.iter().all(|x| (0.0..=1.0).contains(x)));
}
