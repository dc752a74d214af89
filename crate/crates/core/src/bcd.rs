//! Column-wise block coordinate descent on the covariance side of
//! `max log det K − tr(KS) − penalty(K)`.
//!
//! Both the sign-constrained MLE and the graphical lasso reduce, for a fixed
//! column `j`, to the quadratic subproblem
//!
//! ```text
//! minimize ½ βᵀ A β − sᵀ β + λ ‖β‖₁      (optionally subject to β ≥ 0)
//! ```
//!
//! with `A = Σ_{−j,−j}` and `s = S_{−j,j}`. The column is then rebuilt as
//! `Σ_{−j,j} = A β`, and the precision column follows from the Schur
//! complement: `K_jj = 1 / (S_jj − βᵀAβ)`, `K_{−j,j} = −β K_jj`.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::linalg::{log_det, max_abs, spd_inverse};

#[derive(Debug, Clone, Copy)]
pub(crate) struct ColumnProblem {
    pub lambda: f64,
    pub nonnegative: bool,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct BcdOptions {
    pub problem: ColumnProblem,
    pub tol: f64,
    pub max_sweeps: usize,
    pub inner_tol: f64,
    pub inner_max_passes: usize,
}

/// Iterate of the block coordinate descent.
#[derive(Debug, Clone)]
pub(crate) struct BcdState {
    pub sigma: Array2<f64>,
    pub precision: Array2<f64>,
    /// `zero[i][j]` is true when the last column solve touching `(i, j)` left `β` at zero.
    pub zero: Array2<bool>,
    pub sweeps: usize,
    /// `−log det Σ` at the start and after each sweep.
    pub objective: Vec<f64>,
}

impl BcdState {
    /// Starts from a feasible positive-definite `sigma` whose diagonal equals `diag(S)`.
    pub fn new(sigma: Array2<f64>) -> Result<Self> {
        let n = sigma.nrows();
        let precision = spd_inverse(&sigma)?;
        let objective = vec![-log_det(&sigma)?];
        Ok(Self {
            sigma,
            precision,
            zero: Array2::from_elem((n, n), false),
            sweeps: 0,
            objective,
        })
    }
}

/// Cyclic coordinate descent on the column subproblem; `beta` is a warm start.
fn solve_column(
    a: &Array2<f64>,
    s: &[f64],
    beta: &mut [f64],
    problem: ColumnProblem,
    tol: f64,
    max_passes: usize,
) {
    let m = s.len();
    if m == 0 {
        return;
    }
    // grad = Aβ − s
    let mut grad: Vec<f64> = (0..m)
        .map(|i| (0..m).map(|k| a[[i, k]] * beta[k]).sum::<f64>() - s[i])
        .collect();

    let update = |i: usize, beta: &mut [f64], grad: &mut [f64]| -> f64 {
        let aii = a[[i, i]];
        let old = beta[i];
        // unpenalized coordinate target: (s_i − Σ_{k≠i} A_ik β_k) / A_ii
        let rho = aii * old - grad[i];
        let mut new = if problem.lambda > 0.0 {
            rho.signum() * (rho.abs() - problem.lambda).max(0.0) / aii
        } else {
            rho / aii
        };
        if problem.nonnegative && new < 0.0 {
            new = 0.0;
        }
        let delta = new - old;
        if delta != 0.0 {
            beta[i] = new;
            for k in 0..m {
                grad[k] += a[[k, i]] * delta;
            }
        }
        (delta * aii).abs()
    };

    for _ in 0..max_passes {
        let mut full_change = 0.0_f64;
        for i in 0..m {
            full_change = full_change.max(update(i, beta, &mut grad));
        }
        if full_change <= tol {
            return;
        }
        // Sweep the current support until it settles, then re-check everything.
        for _ in 0..max_passes {
            let mut change = 0.0_f64;
            for i in 0..m {
                if beta[i] != 0.0 {
                    change = change.max(update(i, beta, &mut grad));
                }
            }
            if change <= tol {
                break;
            }
        }
    }
}

/// One cyclic sweep over all columns. Returns the largest change in any
/// off-diagonal entry of `Σ`.
pub(crate) fn sweep(s: &Array2<f64>, state: &mut BcdState, opts: &BcdOptions) -> Result<f64> {
    let n = s.nrows();
    state.sweeps += 1;
    if n == 1 {
        state
            .objective
            .push(*state.objective.last().unwrap_or(&0.0));
        return Ok(0.0);
    }
    let sigma = &mut state.sigma;
    let k = &mut state.precision;
    let zero = &mut state.zero;
    let mut a = Array2::<f64>::zeros((n - 1, n - 1));
    let mut svec = vec![0.0; n - 1];
    let mut beta = vec![0.0; n - 1];
    let mut max_change = 0.0_f64;

    for j in 0..n {
        let others: Vec<usize> = (0..n).filter(|&i| i != j).collect();
        for (p, &i) in others.iter().enumerate() {
            for (q, &l) in others.iter().enumerate() {
                a[[p, q]] = sigma[[i, l]];
            }
            svec[p] = s[[i, j]];
            beta[p] = -k[[i, j]] / k[[j, j]];
        }
        solve_column(
            &a,
            &svec,
            &mut beta,
            opts.problem,
            opts.inner_tol,
            opts.inner_max_passes,
        );
        let w: Vec<f64> = (0..n - 1)
            .map(|p| (0..n - 1).map(|q| a[[p, q]] * beta[q]).sum())
            .collect();
        let quad: f64 = w.iter().zip(&beta).map(|(x, b)| x * b).sum();
        let schur = s[[j, j]] - quad;
        if !(schur > 1e-14 * s[[j, j]]) {
            // Inexact inner solve pushed the column outside the PD cone; keep the old one.
            continue;
        }

        let kjj_old = k[[j, j]];
        let kcol_old: Vec<f64> = others.iter().map(|&i| k[[i, j]]).collect();
        let kjj = 1.0 / schur;
        let kcol: Vec<f64> = beta.iter().map(|b| -b * kjj).collect();

        for (p, &i) in others.iter().enumerate() {
            max_change = max_change.max((w[p] - sigma[[i, j]]).abs());
            sigma[[i, j]] = w[p];
            sigma[[j, i]] = w[p];
            zero[[i, j]] = beta[p] == 0.0;
            zero[[j, i]] = beta[p] == 0.0;
        }
        for (p, &i) in others.iter().enumerate() {
            for (q, &l) in others.iter().enumerate() {
                k[[i, l]] += kcol[p] * kcol[q] / kjj - kcol_old[p] * kcol_old[q] / kjj_old;
            }
            k[[i, j]] = kcol[p];
            k[[j, i]] = kcol[p];
        }
        k[[j, j]] = kjj;
    }

    // Refresh the precision to keep rounding drift out of the Schur updates.
    *k = spd_inverse(sigma).map_err(|e| match e {
        Error::NotPositiveDefinite { .. } => Error::NonConvergence {
            iterations: state.sweeps,
            residual: f64::INFINITY,
        },
        other => other,
    })?;
    for ((i, j), z) in zero.indexed_iter() {
        if *z {
            k[[i, j]] = 0.0;
        }
    }
    state.objective.push(-log_det(sigma)?);
    Ok(max_change)
}

/// Sweeps until the column change is at most `tol · max|S|` and `residual`
/// is at most `tol`, or the sweep budget runs out. Returns whether it converged.
pub(crate) fn run(
    s: &Array2<f64>,
    state: &mut BcdState,
    opts: &BcdOptions,
    residual: impl Fn(&Array2<f64>, &Array2<f64>) -> f64,
) -> Result<bool> {
    let scale = max_abs(s).max(f64::MIN_POSITIVE);
    if s.nrows() == 1 {
        return Ok(residual(&state.sigma, &state.precision) <= opts.tol);
    }
    while state.sweeps < opts.max_sweeps {
        let change = sweep(s, state, opts)?;
        if change <= opts.tol * scale && residual(&state.sigma, &state.precision) <= opts.tol {
            return Ok(true);
        }
    }
    Ok(false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn nonnegative_column_clips_at_zero() {
        let a = array![[1.0]];
        let mut beta = vec![0.5];
        solve_column(
            &a,
            &[-0.3],
            &mut beta,
            ColumnProblem {
                lambda: 0.0,
                nonnegative: true,
            },
            1e-12,
            100,
        );
        assert_eq!(beta, vec![0.0]);
    }

    #[test]
    fn lasso_column_soft_thresholds() {
        let a = array![[2.0, 0.0], [0.0, 1.0]];
        let mut beta = vec![0.0, 0.0];
        solve_column(
            &a,
            &[1.0, 0.05],
            &mut beta,
            ColumnProblem {
                lambda: 0.1,
                nonnegative: false,
            },
            1e-14,
            100,
        );
        assert!((beta[0] - 0.45).abs() < 1e-14);
        assert_eq!(beta[1], 0.0);
    }

    #[test]
    fn unconstrained_column_solves_linear_system() {
        let a = array![[4.0, 2.0], [2.0, 3.0]];
        let mut beta = vec![0.0, 0.0];
        solve_column(
            &a,
            &[8.0, 7.0],
            &mut beta,
            ColumnProblem {
                lambda: 0.0,
                nonnegative: false,
            },
            1e-13,
            10_000,
        );
        assert!((beta[0] - 1.25).abs() < 1e-10);
        assert!((beta[1] - 1.5).abs() < 1e-10);
    }
}
