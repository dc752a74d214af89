//! Damped Newton refinement of the Gaussian MLE with a fixed zero pattern in
//! the precision matrix. Used to finish off slow coordinate-descent tails once
//! the active set has settled.

use ndarray::{Array1, Array2};

use crate::linalg::{log_det, spd_inverse, spd_solve};

const MAX_NEWTON_STEPS: usize = 60;

fn objective(k: &Array2<f64>, s: &Array2<f64>) -> Option<f64> {
    let ld = log_det(k).ok()?;
    Some(ld - (k * s).sum())
}

/// Maximizes `log det K − tr(KS)` over `K` with `K_ij = 0` wherever `zero`
/// is set, starting from `k0`. Returns `(Σ, K)` or `None` if the problem is
/// too large or the iteration breaks down.
pub(crate) fn fixed_pattern_mle(
    s: &Array2<f64>,
    k0: &Array2<f64>,
    zero: &Array2<bool>,
    max_params: usize,
) -> Option<(Array2<f64>, Array2<f64>)> {
    let n = s.nrows();
    let mut params: Vec<(usize, usize)> = (0..n).map(|i| (i, i)).collect();
    for i in 0..n {
        for j in (i + 1)..n {
            if !zero[[i, j]] {
                params.push((i, j));
            }
        }
    }
    let m = params.len();
    if m > max_params {
        return None;
    }
    let mut k = k0.clone();
    for ((i, j), z) in zero.indexed_iter() {
        if *z && i != j {
            k[[i, j]] = 0.0;
        }
    }
    let mut f = objective(&k, s)?;

    for _ in 0..MAX_NEWTON_STEPS {
        let sigma = spd_inverse(&k).ok()?;
        let grad = Array1::from_iter(params.iter().map(|&(p, q)| {
            if p == q {
                sigma[[p, p]] - s[[p, p]]
            } else {
                2.0 * (sigma[[p, q]] - s[[p, q]])
            }
        }));
        if grad.iter().all(|g| g.abs() <= 1e-14) {
            break;
        }
        let hess = Array2::from_shape_fn((m, m), |(a, b)| {
            let (p, q) = params[a];
            let (r, t) = params[b];
            match (p == q, r == t) {
                (true, true) => sigma[[p, r]] * sigma[[p, r]],
                (true, false) => 2.0 * sigma[[p, r]] * sigma[[p, t]],
                (false, true) => 2.0 * sigma[[p, r]] * sigma[[q, r]],
                (false, false) => {
                    2.0 * (sigma[[p, r]] * sigma[[q, t]] + sigma[[p, t]] * sigma[[q, r]])
                }
            }
        });
        let step = spd_solve(&hess, grad.view()).ok()?;
        let decrement = step.dot(&grad);
        if !(decrement > 1e-28) {
            break;
        }
        let mut alpha = 1.0;
        loop {
            let mut trial = k.clone();
            for (a, &(p, q)) in params.iter().enumerate() {
                trial[[p, q]] += alpha * step[a];
                if p != q {
                    trial[[q, p]] += alpha * step[a];
                }
            }
            match objective(&trial, s) {
                Some(ft) if ft >= f + 1e-4 * alpha * decrement => {
                    k = trial;
                    f = ft;
                    break;
                }
                // Within rounding of the optimum: accept and stop.
                Some(ft) if ft >= f - 1e-14 * f.abs().max(1.0) && alpha < 1e-3 => {
                    k = trial;
                    f = ft;
                    break;
                }
                _ => alpha *= 0.5,
            }
            if alpha < 1e-12 {
                return None;
            }
        }
    }
    let sigma = spd_inverse(&k).ok()?;
    Some((sigma, k))
}
