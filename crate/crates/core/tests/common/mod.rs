#![allow(dead_code)]

use mtp2_core::linalg::{cholesky, is_positive_definite, log_det, spd_inverse};
use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

/// `XᵀX / rows` for a `rows × n` standard normal `X`; rank `min(rows, n)`.
pub fn wishart(rng: &mut impl Rng, n: usize, rows: usize) -> Array2<f64> {
    let x = Array2::from_shape_fn((rows, n), |_| rng.sample::<f64, _>(StandardNormal));
    x.t().dot(&x) / rows as f64
}

/// Sample covariance (denominator T) of `t` draws from `N(0, sigma)`.
pub fn gaussian_sample_cov(rng: &mut impl Rng, sigma: &Array2<f64>, t: usize) -> Array2<f64> {
    let n = sigma.nrows();
    let l = cholesky(sigma).unwrap();
    let z = Array2::from_shape_fn((t, n), |_| rng.sample::<f64, _>(StandardNormal));
    let x = z.dot(&l.t());
    let mean = x.mean_axis(ndarray::Axis(0)).unwrap();
    let c = &x - &mean;
    c.t().dot(&c) / t as f64
}

pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

fn pairs(n: usize) -> Vec<(usize, usize)> {
    let mut v = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            v.push((i, j));
        }
    }
    v
}

fn objective(k: &Array2<f64>, s: &Array2<f64>) -> Option<f64> {
    let ld = log_det(k).ok()?;
    Some(ld - (k * s).sum())
}

/// Gaussian MLE with `K_ij = 0` forced on `zeros` and free elsewhere, by
/// damped Newton on the free entries of `K`.
pub fn constrained_mle(s: &Array2<f64>, zeros: &[(usize, usize)]) -> Array2<f64> {
    let n = s.nrows();
    let mut params: Vec<(usize, usize)> = (0..n).map(|i| (i, i)).collect();
    params.extend(pairs(n).into_iter().filter(|p| !zeros.contains(p)));
    let m = params.len();
    let mut k = Array2::from_shape_fn((n, n), |(i, j)| if i == j { 1.0 / s[[i, i]] } else { 0.0 });

    for _ in 0..200 {
        let sigma = spd_inverse(&k).unwrap();
        let grad: Vec<f64> = params
            .iter()
            .map(|&(i, j)| {
                if i == j {
                    sigma[[i, i]] - s[[i, i]]
                } else {
                    2.0 * (sigma[[i, j]] - s[[i, j]])
                }
            })
            .collect();
        if grad.iter().all(|g| g.abs() < 1e-14) {
            break;
        }
        // Negative Hessian: tr(Σ E_a Σ E_b).
        let mut h = Array2::<f64>::zeros((m, m));
        for (a, &(p, q)) in params.iter().enumerate() {
            for (b, &(r, t)) in params.iter().enumerate() {
                let term = |p: usize, q: usize, r: usize, t: usize| sigma[[q, r]] * sigma[[t, p]];
                let mut v = term(p, q, r, t);
                if r != t {
                    v += term(p, q, t, r);
                }
                if p != q {
                    v += term(q, p, r, t);
                    if r != t {
                        v += term(q, p, t, r);
                    }
                }
                h[[a, b]] = v;
            }
        }
        let step = mtp2_core::linalg::spd_solve(&h, ndarray::Array1::from(grad).view()).unwrap();
        let f0 = objective(&k, s).unwrap();
        let mut alpha = 1.0;
        loop {
            let mut trial = k.clone();
            for (a, &(i, j)) in params.iter().enumerate() {
                trial[[i, j]] += alpha * step[a];
                if i != j {
                    trial[[j, i]] += alpha * step[a];
                }
            }
            match objective(&trial, s) {
                Some(f) if f >= f0 - 1e-15 * f0.abs() => {
                    k = trial;
                    break;
                }
                _ => alpha *= 0.5,
            }
            if alpha < 1e-12 {
                return k;
            }
        }
    }
    k
}

/// Exhaustive active-set oracle for the sign-constrained MLE: tries every
/// zero pattern and returns the `(Σ, K)` pair satisfying all KKT conditions.
pub fn active_set_oracle(s: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
    let n = s.nrows();
    let all = pairs(n);
    let mut best: Option<(f64, Array2<f64>, Array2<f64>)> = None;
    for mask in 0..(1usize << all.len()) {
        let zeros: Vec<(usize, usize)> = all
            .iter()
            .enumerate()
            .filter(|(b, _)| mask & (1 << b) != 0)
            .map(|(_, p)| *p)
            .collect();
        let k = constrained_mle(s, &zeros);
        let sigma = spd_inverse(&k).unwrap();
        let mut violation = 0.0_f64;
        for &(i, j) in &all {
            if zeros.contains(&(i, j)) {
                violation = violation.max(s[[i, j]] - sigma[[i, j]]);
            } else {
                violation = violation.max(k[[i, j]]);
            }
        }
        if best.as_ref().is_none_or(|(v, _, _)| violation < *v) {
            best = Some((violation, sigma, k));
        }
    }
    let (violation, sigma, k) = best.unwrap();
    assert!(
        violation < 1e-9,
        "no KKT-feasible active set (best violation {violation})"
    );
    (sigma, k)
}

/// Projected gradient ascent on the dual `max log det W` subject to
/// `W_ii = S_ii` and `|W_ij − S_ij| ≤ λ`; returns `W⁻¹`.
pub fn projected_gradient_oracle(s: &Array2<f64>, lambda: f64) -> Array2<f64> {
    let n = s.nrows();
    let project = |w: &Array2<f64>| {
        Array2::from_shape_fn((n, n), |(i, j)| {
            if i == j {
                s[[i, i]]
            } else {
                w[[i, j]].clamp(s[[i, j]] - lambda, s[[i, j]] + lambda)
            }
        })
    };
    let mut w = Array2::from_shape_fn((n, n), |(i, j)| if i == j { s[[i, i]] } else { 0.0 });
    w = project(&w);
    if !is_positive_definite(&w) {
        w = Array2::from_diag(&s.diag().to_owned());
    }
    let mut obj = log_det(&w).unwrap();
    let mut step = 1.0;
    for _ in 0..200_000 {
        let grad = spd_inverse(&w).unwrap();
        let mut accepted = None;
        let mut eta = step;
        for _ in 0..60 {
            let cand = project(&(&w + &(&grad * eta)));
            if let Ok(v) = log_det(&cand) {
                let moved = &cand - &w;
                // Armijo condition for the projected step.
                if v >= obj + 1e-4 * (&grad * &moved).sum() {
                    accepted = Some((cand, v));
                    break;
                }
            }
            eta *= 0.5;
        }
        let Some((cand, v)) = accepted else { break };
        let change = max_abs_diff(&cand, &w);
        w = cand;
        obj = v;
        step = (eta * 2.0).min(1e3);
        if change < 1e-14 {
            break;
        }
    }
    spd_inverse(&w).unwrap()
}
