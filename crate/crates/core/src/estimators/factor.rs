use ndarray::{s, Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::shrinkage::{linear_shrinkage, lw_optimal_rho_of, ShrinkageIntensity};
use crate::error::{Error, Result};
use crate::linalg::{cholesky, sym_eigen, SymMatrix};
use crate::panel::{FactorPanel, ReturnsPanel};
use crate::stats::{covariance_of, sample_covariance, Denominator};

/// Per-asset time-series regressions of returns on observed factors.
#[derive(Debug, Clone)]
pub struct FactorRegression {
    pub alpha: Array1<f64>,
    /// K×N loadings.
    pub loadings: Array2<f64>,
    /// T×N residuals.
    pub residuals: Array2<f64>,
    /// Sample covariance of the factors (T − 1 denominator).
    pub factor_cov: Array2<f64>,
}

fn aligned_factors(panel: &ReturnsPanel, factors: &FactorPanel) -> Result<Array2<f64>> {
    if factors.dates == panel.dates {
        return Ok(factors.factors.clone());
    }
    match factors.align_to(&panel.dates) {
        Ok(f) => Ok(f.factors),
        Err(_) => Err(Error::WindowMismatch {
            returns: panel.n_periods(),
            factors: factors.factors.nrows(),
        }),
    }
}

/// OLS of each return column on `(1, f_t)`.
pub fn factor_regression(panel: &ReturnsPanel, factors: &FactorPanel) -> Result<FactorRegression> {
    let f = aligned_factors(panel, factors)?;
    let (t, k) = f.dim();
    if t <= k + 1 {
        return Err(Error::InsufficientData {
            required: k + 2,
            actual: t,
        });
    }
    let mut x = Array2::<f64>::ones((t, k + 1));
    x.slice_mut(s![.., 1..]).assign(&f);
    let xtx = x.t().dot(&x);
    let l = cholesky(&xtx).map_err(|_| Error::SingularDesign)?;
    let xty = x.t().dot(&panel.returns);

    // Solve (XᵀX) C = XᵀY column by column with the shared factor.
    let mut coef = xty;
    for mut col in coef.columns_mut() {
        let m = col.len();
        for i in 0..m {
            let mut v = col[i];
            for j in 0..i {
                v -= l[[i, j]] * col[j];
            }
            col[i] = v / l[[i, i]];
        }
        for i in (0..m).rev() {
            let mut v = col[i];
            for j in (i + 1)..m {
                v -= l[[j, i]] * col[j];
            }
            col[i] = v / l[[i, i]];
        }
    }
    let residuals = &panel.returns - &x.dot(&coef);
    let factor_cov = covariance_of(&f, Denominator::TMinusOne)?.into_inner();
    Ok(FactorRegression {
        alpha: coef.row(0).to_owned(),
        loadings: coef.slice(s![1.., ..]).to_owned(),
        residuals,
        factor_cov,
    })
}

fn systematic_part(reg: &FactorRegression) -> Array2<f64> {
    reg.loadings.t().dot(&reg.factor_cov).dot(&reg.loadings)
}

/// `B̂ᵀΣ̂_fB̂ + diag(residual variances)`.
pub fn exact_factor_model(panel: &ReturnsPanel, factors: &FactorPanel) -> Result<SymMatrix> {
    let reg = factor_regression(panel, factors)?;
    let mut sigma = systematic_part(&reg);
    let t = reg.residuals.nrows() as f64;
    for (i, col) in reg.residuals.columns().into_iter().enumerate() {
        let m = col.sum() / t;
        sigma[[i, i]] += col.iter().map(|u| (u - m) * (u - m)).sum::<f64>() / (t - 1.0);
    }
    SymMatrix::symmetrize(sigma)
}

/// As [`exact_factor_model`] but with the residual covariance shrunk toward
/// a multiple of the identity with the Ledoit–Wolf intensity.
pub fn afm_ls(
    panel: &ReturnsPanel,
    factors: &FactorPanel,
) -> Result<(SymMatrix, ShrinkageIntensity)> {
    let reg = factor_regression(panel, factors)?;
    let resid_cov = covariance_of(&reg.residuals, Denominator::TMinusOne)?;
    let intensity = lw_optimal_rho_of(&reg.residuals)?;
    let shrunk = linear_shrinkage(&resid_cov, intensity.rho)?;
    let sigma = systematic_part(&reg) + shrunk.as_array();
    Ok((SymMatrix::symmetrize(sigma)?, intensity))
}

/// Threshold constant for the POET residual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoetThreshold {
    /// Smallest grid value `0, 0.25, …, 3` giving a positive-definite output.
    Auto,
    Fixed(f64),
}

/// Scale on which residual off-diagonals are thresholded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdScale {
    #[default]
    Covariance,
    Correlation,
}

#[derive(Debug, Clone)]
pub struct PoetFit {
    pub matrix: SymMatrix,
    /// Threshold constant actually used (`None` for the diagonal fallback).
    pub c: Option<f64>,
    /// True when no grid value gave a PD matrix and the residual was reduced to its diagonal.
    pub diagonal_fallback: bool,
}

fn min_eigen_ok(a: &Array2<f64>) -> Result<bool> {
    let n = a.nrows() as f64;
    let trace = a.diag().sum();
    let eig = sym_eigen(a)?;
    let min = eig.values.iter().fold(f64::INFINITY, |m, v| m.min(*v));
    Ok(min > 1e-8 * trace / n)
}

/// Rank-`k` principal component part of `S` plus the soft-thresholded residual.
pub fn poet(
    panel: &ReturnsPanel,
    k: usize,
    threshold: PoetThreshold,
    scale: ThresholdScale,
) -> Result<PoetFit> {
    let n = panel.n_assets();
    let t = panel.n_periods();
    if k >= n {
        return Err(Error::RankTooLarge { k, n });
    }
    let s = sample_covariance(panel, Denominator::TMinusOne)?;
    let mut low_rank = Array2::<f64>::zeros((n, n));
    if k > 0 {
        let eig = sym_eigen(&s)?;
        let v = eig.vectors.slice(s![.., ..k]);
        let scaled = &v * &eig.values.slice(s![..k]).insert_axis(Axis(0));
        low_rank = scaled.dot(&v.t());
    }
    let residual = s.as_array() - &low_rank;
    let rate = ((n as f64).ln() / t as f64).sqrt();

    let build = |c: f64| -> Array2<f64> {
        let tau = c * rate;
        let mut out = low_rank.clone();
        for i in 0..n {
            for j in 0..n {
                let r = residual[[i, j]];
                out[[i, j]] += if i == j {
                    r
                } else {
                    let cut = match scale {
                        ThresholdScale::Covariance => tau,
                        ThresholdScale::Correlation => {
                            tau * (residual[[i, i]].max(0.0) * residual[[j, j]].max(0.0)).sqrt()
                        }
                    };
                    r.signum() * (r.abs() - cut).max(0.0)
                };
            }
        }
        out
    };

    match threshold {
        PoetThreshold::Fixed(c) => {
            if !(c >= 0.0) || !c.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "threshold constant must be nonnegative, got {c}"
                )));
            }
            Ok(PoetFit {
                matrix: SymMatrix::symmetrize(build(c))?,
                c: Some(c),
                diagonal_fallback: false,
            })
        }
        PoetThreshold::Auto => {
            for step in 0..=12 {
                let c = 0.25 * step as f64;
                let m = SymMatrix::symmetrize(build(c))?;
                if min_eigen_ok(&m)? {
                    return Ok(PoetFit {
                        matrix: m,
                        c: Some(c),
                        diagonal_fallback: false,
                    });
                }
            }
            let mut m = low_rank;
            for i in 0..n {
                m[[i, i]] += residual[[i, i]];
            }
            let m = SymMatrix::symmetrize(m)?;
            if !min_eigen_ok(&m)? {
                return Err(Error::NoPdThreshold);
            }
            Ok(PoetFit {
                matrix: m,
                c: None,
                diagonal_fallback: true,
            })
        }
    }
}
