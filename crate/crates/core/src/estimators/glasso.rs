use ndarray::{concatenate, s, Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bcd::{self, BcdOptions, BcdState, ColumnProblem};
use crate::error::{Error, Result};
use crate::linalg::{is_positive_definite, log_det, SpdMatrix, SymMatrix};
use crate::panel::ReturnsPanel;
use crate::stats::{covariance_of, Denominator};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlassoOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for GlassoOptions {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_iter: 1000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GlassoFit {
    pub precision: SpdMatrix,
    pub sigma: SpdMatrix,
    pub lambda: f64,
    pub iterations: usize,
    /// Stationarity residual divided by `max_i S_ii`.
    pub residual: f64,
}

/// Largest violation of the penalized-MLE optimality conditions, all
/// entries divided by `scale`:
/// `Σ_ij − S_ij = λ·sign(K_ij)` where `K_ij ≠ 0`, `|Σ_ij − S_ij| ≤ λ` where
/// `K_ij = 0`, and `Σ_ii = S_ii`.
pub fn stationarity_residual(
    s: &Array2<f64>,
    sigma: &Array2<f64>,
    k: &Array2<f64>,
    lambda: f64,
    scale: f64,
) -> f64 {
    let mut r = 0.0_f64;
    for ((i, j), sv) in s.indexed_iter() {
        let gap = sigma[[i, j]] - sv;
        let v = if i == j {
            gap.abs()
        } else if k[[i, j]] == 0.0 {
            (gap.abs() - lambda).max(0.0)
        } else {
            (gap - lambda * k[[i, j]].signum()).abs()
        };
        r = r.max(v / scale);
    }
    r
}

fn validate(s: &SymMatrix, lambda: f64, opts: &GlassoOptions) -> Result<()> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidInput(format!(
            "penalty must be nonnegative, got {lambda}"
        )));
    }
    if !(opts.tol > 0.0) || opts.max_iter == 0 {
        return Err(Error::InvalidInput(
            "tolerance and iteration limit must be positive".into(),
        ));
    }
    for i in 0..s.dim() {
        if !(s[[i, i]] > 0.0) {
            return Err(Error::InvalidInput(format!(
                "diagonal entry {i} must be positive"
            )));
        }
    }
    if lambda == 0.0 && !is_positive_definite(s) {
        return Err(Error::InvalidInput(
            "the unpenalized fit needs a positive-definite input".into(),
        ));
    }
    Ok(())
}

/// Penalized Gaussian MLE `max log det K − tr(KS) − λ Σ_{i≠j} |K_ij|` by
/// column-wise coordinate descent. The diagonal is not penalized.
pub fn glasso(s: &SymMatrix, lambda: f64, opts: &GlassoOptions) -> Result<GlassoFit> {
    validate(s, lambda, opts)?;
    let n = s.dim();
    let c = (0..n).map(|i| s[[i, i]]).fold(0.0, f64::max);
    let sn = s.as_array() / c;
    let lam = lambda / c;

    let max_off = sn
        .indexed_iter()
        .filter(|((i, j), _)| i != j)
        .fold(0.0_f64, |m, (_, v)| m.max(v.abs()));
    let mut t = if max_off > 0.0 {
        (1.0 - lam / max_off).max(0.0)
    } else {
        0.0
    };
    if t > 0.0 && !is_positive_definite(&sn) {
        t = t.min(0.9);
    }
    let start = Array2::from_shape_fn(
        (n, n),
        |(i, j)| {
            if i == j {
                sn[[i, i]]
            } else {
                t * sn[[i, j]]
            }
        },
    );

    let bcd_opts = BcdOptions {
        problem: ColumnProblem {
            lambda: lam,
            nonnegative: false,
        },
        tol: opts.tol,
        max_sweeps: opts.max_iter,
        inner_tol: (opts.tol * 1e-2).min(1e-9),
        inner_max_passes: 100_000,
    };
    let mut state = BcdState::new(start)?;
    let residual =
        |sig: &Array2<f64>, k: &Array2<f64>| stationarity_residual(&sn, sig, k, lam, 1.0);
    let converged = bcd::run(&sn, &mut state, &bcd_opts, residual)?;
    let r = residual(&state.sigma, &state.precision);
    if !converged {
        return Err(Error::NonConvergence {
            iterations: state.sweeps,
            residual: r,
        });
    }
    let sigma = state.sigma * c;
    let precision = state.precision / c;
    Ok(GlassoFit {
        precision: SpdMatrix::new(precision)?,
        sigma: SpdMatrix::new(sigma)?,
        lambda,
        iterations: state.sweeps,
        residual: r,
    })
}

/// One evaluated penalty in the cross-validation schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvPoint {
    pub round: usize,
    pub lambda: f64,
    /// Held-out log-likelihood summed over folds; `-inf` if a fold fit failed.
    pub score: f64,
}

#[derive(Debug, Clone)]
pub struct GlassoCv {
    pub lambda: f64,
    pub fit: GlassoFit,
    pub path: Vec<CvPoint>,
}

pub const CV_FOLDS: usize = 3;
pub const CV_GRID: usize = 4;
pub const CV_ROUNDS: usize = 4;

fn log_grid(lo: f64, hi: f64) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..CV_GRID)
        .map(|i| (a + (b - a) * i as f64 / (CV_GRID - 1) as f64).exp())
        .collect()
}

/// Splits `0..t` into `CV_FOLDS` contiguous blocks.
fn fold_bounds(t: usize) -> Vec<(usize, usize)> {
    (0..CV_FOLDS)
        .map(|f| (f * t / CV_FOLDS, (f + 1) * t / CV_FOLDS))
        .collect()
}

/// Chooses the penalty by contiguous 3-fold cross-validation on a 4-point
/// log-spaced grid refined 4 times, then refits on the whole panel.
pub fn glasso_cv(panel: &ReturnsPanel, opts: &GlassoOptions) -> Result<GlassoCv> {
    let t = panel.n_periods();
    if t < 2 * CV_FOLDS {
        return Err(Error::InsufficientData {
            required: 2 * CV_FOLDS,
            actual: t,
        });
    }
    let x = &panel.returns;
    let full = covariance_of(x, Denominator::T)?;

    let mut folds = Vec::with_capacity(CV_FOLDS);
    for (a, b) in fold_bounds(t) {
        let train = concatenate(Axis(0), &[x.slice(s![..a, ..]), x.slice(s![b.., ..])])
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
        let s_train = covariance_of(&train, Denominator::T)?;
        let s_test = covariance_of(&x.slice(s![a..b, ..]).to_owned(), Denominator::T)?;
        folds.push((s_train, s_test));
    }

    let score = |lambda: f64| -> f64 {
        let mut total = 0.0;
        for (train, test) in &folds {
            let fit = match glasso(train, lambda, opts) {
                Ok(f) => f,
                Err(_) => return f64::NEG_INFINITY,
            };
            let k = fit.precision.as_array();
            let ld = match log_det(k) {
                Ok(v) => v,
                Err(_) => return f64::NEG_INFINITY,
            };
            total += ld - (k * test.as_array()).sum();
        }
        total
    };

    let n = full.dim();
    let mut hi = 0.0_f64;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                hi = hi.max(full[[i, j]].abs());
            }
        }
    }
    if !(hi > 0.0) {
        hi = (0..n).map(|i| full[[i, i]]).fold(0.0, f64::max) * 1e-2;
    }
    let mut lo = 1e-2 * hi;
    let mut path = Vec::new();
    let mut best = (f64::NEG_INFINITY, hi);
    for round in 1..=CV_ROUNDS {
        let grid = log_grid(lo, hi);
        let scores: Vec<f64> = grid.par_iter().map(|&l| score(l)).collect();
        for (&lambda, &sc) in grid.iter().zip(&scores) {
            path.push(CvPoint {
                round,
                lambda,
                score: sc,
            });
            // Ties go to the larger penalty.
            if sc > best.0 || (sc == best.0 && lambda > best.1) {
                best = (sc, lambda);
            }
        }
        let half = (hi / lo).ln() / 8.0;
        lo = best.1 * (-half).exp();
        hi = best.1 * half.exp();
    }
    let lambda = best.1;
    let fit = glasso(&full, lambda, opts)?;
    Ok(GlassoCv { lambda, fit, path })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_abs, spd_inverse};
    use ndarray::array;

    #[test]
    fn unpenalized_fit_is_the_inverse() {
        let s =
            SymMatrix::new(array![[2.0, 0.5, 0.1], [0.5, 1.0, -0.3], [0.1, -0.3, 1.5]]).unwrap();
        let fit = glasso(&s, 0.0, &GlassoOptions::default()).unwrap();
        let inv = spd_inverse(&s).unwrap();
        assert!(max_abs(&(fit.precision.as_array() - &inv)) < 1e-6);
    }

    #[test]
    fn large_penalty_gives_diagonal_precision() {
        let s =
            SymMatrix::new(array![[2.0, 0.5, 0.1], [0.5, 1.0, -0.3], [0.1, -0.3, 1.5]]).unwrap();
        let fit = glasso(&s, 0.5, &GlassoOptions::default()).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { 1.0 / s[[i, i]] } else { 0.0 };
                assert!((fit.precision[[i, j]] - expected).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rejects_singular_input_without_penalty() {
        let s = SymMatrix::new(array![[1.0, 1.0], [1.0, 1.0]]).unwrap();
        assert!(matches!(
            glasso(&s, 0.0, &GlassoOptions::default()),
            Err(Error::InvalidInput(_))
        ));
        assert!(glasso(&s, 0.1, &GlassoOptions::default()).is_ok());
        assert!(matches!(
            glasso(&s, -1.0, &GlassoOptions::default()),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn folds_are_contiguous_and_cover_rows() {
        assert_eq!(fold_bounds(10), vec![(0, 3), (3, 6), (6, 10)]);
        let g = log_grid(0.01, 1.0);
        assert!((g[0] - 0.01).abs() < 1e-15 && (g[3] - 1.0).abs() < 1e-15);
    }
}
