use std::f64::consts::PI;

use ndarray::{Array1, Array2};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{cholesky, log_det, SpdMatrix};

/// Relative slack allowed when comparing the two sides of the MTP₂ inequality.
pub const MTP2_RELATIVE_SLACK: f64 = 1e-12;

/// True iff `k` is positive definite and every off-diagonal entry is at most `tol`.
pub fn is_m_matrix(k: &Array2<f64>, tol: f64) -> bool {
    if !k.is_square() || cholesky(k).is_err() {
        return false;
    }
    k.indexed_iter().all(|((i, j), v)| i == j || *v <= tol)
}

/// A probability density on ℝᴹ.
pub trait DensityOracle {
    fn dim(&self) -> usize;
    fn density(&self, x: &[f64]) -> f64;
}

/// Both sides of `p(x)p(y) ≤ p(x∧y)p(x∨y)` for one pair of points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

pub fn mtp2_pair_report(p: &dyn DensityOracle, x: &[f64], y: &[f64]) -> Result<PairCheck> {
    let m = p.dim();
    for v in [x, y] {
        if v.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                actual: v.len(),
            });
        }
    }
    let meet: Vec<f64> = x.iter().zip(y).map(|(a, b)| a.min(*b)).collect();
    let join: Vec<f64> = x.iter().zip(y).map(|(a, b)| a.max(*b)).collect();
    let lhs = p.density(x) * p.density(y);
    let rhs = p.density(&meet) * p.density(&join);
    Ok(PairCheck {
        lhs,
        rhs,
        holds: lhs <= rhs * (1.0 + MTP2_RELATIVE_SLACK),
    })
}

/// Whether the MTP₂ inequality holds for the pair `(x, y)`.
pub fn check_mtp2_pair(p: &dyn DensityOracle, x: &[f64], y: &[f64]) -> Result<bool> {
    Ok(mtp2_pair_report(p, x, y)?.holds)
}

fn quad_form(k: &Array2<f64>, x: &[f64]) -> f64 {
    let v = Array1::from(x.to_vec());
    v.dot(&k.dot(&v))
}

/// Centered Gaussian density parameterized by its precision matrix.
#[derive(Debug, Clone)]
pub struct GaussianDensity {
    precision: Array2<f64>,
    log_norm: f64,
}

impl GaussianDensity {
    pub fn new(precision: &SpdMatrix) -> Result<Self> {
        let m = precision.dim() as f64;
        let log_norm = 0.5 * log_det(precision)? - 0.5 * m * (2.0 * PI).ln();
        Ok(Self {
            precision: precision.as_array().clone(),
            log_norm,
        })
    }
}

impl DensityOracle for GaussianDensity {
    fn dim(&self) -> usize {
        self.precision.nrows()
    }

    fn density(&self, x: &[f64]) -> f64 {
        (self.log_norm - 0.5 * quad_form(&self.precision, x)).exp()
    }
}

/// Centered bivariate Student-t density with scatter `precision⁻¹`.
#[derive(Debug, Clone)]
pub struct BivariateT {
    precision: Array2<f64>,
    df: f64,
    norm: f64,
}

impl BivariateT {
    pub fn new(precision: &SpdMatrix, df: f64) -> Result<Self> {
        if precision.dim() != 2 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                actual: precision.dim(),
            });
        }
        if !(df > 0.0) || !df.is_finite() {
            return Err(Error::InvalidInput(format!(
                "degrees of freedom must be positive, got {df}"
            )));
        }
        // Γ(ν/2 + 1) / Γ(ν/2) = ν/2, so the constant is √det K / (2π).
        let norm = (0.5 * log_det(precision)?).exp() / (2.0 * PI);
        Ok(Self {
            precision: precision.as_array().clone(),
            df,
            norm,
        })
    }

    /// Density divided by its normalizing constant: `(1 + xᵀKx/ν)^{−(ν+2)/2}`.
    pub fn kernel(&self, x: &[f64]) -> f64 {
        (1.0 + quad_form(&self.precision, x) / self.df).powf(-(self.df + 2.0) / 2.0)
    }

    pub fn normalizing_constant(&self) -> f64 {
        self.norm
    }
}

impl DensityOracle for BivariateT {
    fn dim(&self) -> usize {
        2
    }

    fn density(&self, x: &[f64]) -> f64 {
        self.norm * self.kernel(x)
    }
}

/// Density of the centered bivariate t distribution at `x`.
pub fn bivariate_t_density(x: [f64; 2], precision: &SpdMatrix, df: f64) -> Result<f64> {
    Ok(BivariateT::new(precision, df)?.density(&x))
}

/// `market_var · ββᵀ + diag(idio_vars)`.
pub fn single_factor_covariance(
    beta: &[f64],
    market_var: f64,
    idio_vars: &[f64],
) -> Result<SpdMatrix> {
    if beta.len() != idio_vars.len() {
        return Err(Error::DimensionMismatch {
            expected: beta.len(),
            actual: idio_vars.len(),
        });
    }
    if !(market_var > 0.0) {
        return Err(Error::NonpositiveVariance(format!(
            "market variance {market_var}"
        )));
    }
    if let Some((i, v)) = idio_vars.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::NonpositiveVariance(format!(
            "idiosyncratic variance {v} for asset {i}"
        )));
    }
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::InvalidInput("factor loadings must be finite".into()));
    }
    let n = beta.len();
    let sigma = Array2::from_shape_fn((n, n), |(i, j)| {
        market_var * (beta[i] * beta[j]) + if i == j { idio_vars[i] } else { 0.0 }
    });
    SpdMatrix::new(sigma)
}
