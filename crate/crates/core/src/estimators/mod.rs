//! Covariance estimators behind one tagged configuration type.

pub mod factor;
pub mod glasso;
pub mod shrinkage;

use std::collections::BTreeMap;

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::linalg::{is_positive_definite, spd_solve, sym_pseudo_inverse, SpdMatrix, SymMatrix};
use crate::mtp2::{mtp2_mle_kendall_with, mtp2_mle_with, InputScale, Mtp2Options, MtpSolution};
use crate::panel::{FactorPanel, ReturnsPanel};
use crate::stats::{kendall_tau_matrix, sample_covariance, Denominator};

pub use factor::{
    afm_ls, exact_factor_model, factor_regression, poet, FactorRegression, PoetFit, PoetThreshold,
    ThresholdScale,
};
pub use glasso::{
    glasso, glasso_cv, stationarity_residual, CvPoint, GlassoCv, GlassoFit, GlassoOptions,
};
pub use shrinkage::{
    linear_shrinkage, linear_shrinkage_eigen, lw_optimal_rho, lw_optimal_rho_of, ShrinkageIntensity,
};

/// Relative eigenvalue cutoff used by the pseudo-inverse.
pub const PINV_REL_TOL: f64 = 1e-10;

/// How downstream code should apply the inverse of an estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Inversion {
    Cholesky,
    /// Moore–Penrose inverse; only the sample covariance uses it, when it is singular.
    PseudoInverse,
}

/// A fitted covariance matrix together with everything needed to reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceEstimate {
    pub estimator_id: String,
    pub assets: Vec<String>,
    pub matrix: SymMatrix,
    pub params: BTreeMap<String, Value>,
    pub inversion: Inversion,
}

impl CovarianceEstimate {
    pub fn new(estimator_id: &str, assets: Vec<String>, matrix: SymMatrix) -> Self {
        Self {
            estimator_id: estimator_id.to_string(),
            assets,
            matrix,
            params: BTreeMap::new(),
            inversion: Inversion::Cholesky,
        }
    }

    pub fn with_param(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.params.insert(key.to_string(), value.into());
        self
    }

    pub fn is_positive_definite(&self) -> bool {
        is_positive_definite(&self.matrix)
    }

    pub fn spd(&self) -> Result<SpdMatrix> {
        SpdMatrix::new(self.matrix.as_array().clone())
    }

    /// `Σ̂⁻¹ b`, or `Σ̂⁺ b` for pseudo-inverse estimates.
    pub fn solve(&self, b: ArrayView1<f64>) -> Result<Array1<f64>> {
        match self.inversion {
            Inversion::Cholesky => spd_solve(&self.matrix, b),
            Inversion::PseudoInverse => Ok(sym_pseudo_inverse(&self.matrix, PINV_REL_TOL)?.dot(&b)),
        }
    }

    /// Whether downstream portfolio code can use this estimate.
    pub fn is_usable(&self) -> bool {
        self.inversion == Inversion::PseudoInverse || self.is_positive_definite()
    }
}

fn default_true() -> bool {
    true
}
fn default_tol() -> f64 {
    1e-7
}
fn default_max_iter() -> usize {
    500
}
fn default_glasso_max_iter() -> usize {
    1000
}
fn default_poet_k() -> usize {
    1
}

/// Estimator selection and parameters, as written in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EstimatorSpec {
    /// Sample covariance (T − 1). When singular it is inverted with the
    /// pseudo-inverse, or left unusable if `pseudo_inverse` is off.
    Sample {
        #[serde(default = "default_true")]
        pseudo_inverse: bool,
    },
    Mtp2 {
        #[serde(default = "default_tol")]
        tol: f64,
        #[serde(default = "default_max_iter")]
        max_iter: usize,
    },
    Mtp2Kt {
        #[serde(default = "default_tol")]
        tol: f64,
        #[serde(default = "default_max_iter")]
        max_iter: usize,
    },
    /// Linear shrinkage; `rho = None` uses the Ledoit–Wolf intensity.
    Ls {
        #[serde(default)]
        rho: Option<f64>,
    },
    Efm,
    AfmLs,
    Poet {
        #[serde(default = "default_poet_k")]
        k: usize,
        /// Threshold constant; `None` searches the grid.
        #[serde(default)]
        c: Option<f64>,
        #[serde(default)]
        correlation_scale: bool,
    },
    /// Graphical lasso; `lambda = None` selects it by cross-validation.
    Glasso {
        #[serde(default)]
        lambda: Option<f64>,
        #[serde(default = "default_tol")]
        tol: f64,
        #[serde(default = "default_glasso_max_iter")]
        max_iter: usize,
    },
}

/// Names accepted by [`EstimatorSpec::from_name`].
pub const METHODS: &[&str] = &[
    "sample", "mtp2", "mtp2-kt", "ls", "efm", "afm-ls", "poet", "glasso",
];

/// Output of [`EstimatorSpec::fit`].
#[derive(Debug, Clone)]
pub struct Fit {
    pub estimate: CovarianceEstimate,
    /// Solver diagnostics for the constrained MLE methods.
    pub solution: Option<MtpSolution>,
    /// The matrix handed to the constrained solver.
    pub input: Option<SymMatrix>,
}

impl EstimatorSpec {
    /// The registry: default parameters for every method name.
    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name {
            "sample" => Self::Sample {
                pseudo_inverse: true,
            },
            "mtp2" => Self::Mtp2 {
                tol: default_tol(),
                max_iter: default_max_iter(),
            },
            "mtp2-kt" => Self::Mtp2Kt {
                tol: default_tol(),
                max_iter: default_max_iter(),
            },
            "ls" => Self::Ls { rho: None },
            "efm" => Self::Efm,
            "afm-ls" => Self::AfmLs,
            "poet" => Self::Poet {
                k: default_poet_k(),
                c: None,
                correlation_scale: false,
            },
            "glasso" => Self::Glasso {
                lambda: None,
                tol: default_tol(),
                max_iter: default_glasso_max_iter(),
            },
            other => {
                return Err(Error::InvalidSpec(format!(
                    "unknown method '{other}'; expected one of {}",
                    METHODS.join(", ")
                )))
            }
        })
    }

    pub fn id(&self) -> &'static str {
        match self {
            Self::Sample { .. } => "sample",
            Self::Mtp2 { .. } => "mtp2",
            Self::Mtp2Kt { .. } => "mtp2-kt",
            Self::Ls { .. } => "ls",
            Self::Efm => "efm",
            Self::AfmLs => "afm-ls",
            Self::Poet { .. } => "poet",
            Self::Glasso { .. } => "glasso",
        }
    }

    pub fn needs_factors(&self) -> bool {
        matches!(self, Self::Efm | Self::AfmLs)
    }

    /// Checks parameter ranges without touching data.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        match *self {
            Self::Mtp2 { tol, max_iter }
            | Self::Mtp2Kt { tol, max_iter }
            | Self::Glasso { tol, max_iter, .. }
                if !(tol > 0.0) || max_iter == 0 =>
            {
                bad(format!(
                    "tol must be positive and max_iter nonzero (tol {tol}, max_iter {max_iter})"
                ))
            }
            Self::Ls { rho: Some(r) } if !(0.0..=1.0).contains(&r) => Err(Error::RhoOutOfRange(r)),
            Self::Poet { c: Some(c), .. } if !(c >= 0.0) || !c.is_finite() => {
                bad(format!("threshold constant must be nonnegative, got {c}"))
            }
            Self::Glasso {
                lambda: Some(l), ..
            } if !(l >= 0.0) || !l.is_finite() => {
                bad(format!("lambda must be nonnegative, got {l}"))
            }
            _ => Ok(()),
        }
    }

    pub fn estimate(
        &self,
        window: &ReturnsPanel,
        factors: Option<&FactorPanel>,
    ) -> Result<CovarianceEstimate> {
        Ok(self.fit(window, factors)?.estimate)
    }

    pub fn fit(&self, window: &ReturnsPanel, factors: Option<&FactorPanel>) -> Result<Fit> {
        self.validate()?;
        let assets = window.assets.clone();
        let id = self.id();
        let plain = |estimate| Fit {
            estimate,
            solution: None,
            input: None,
        };
        let need_factors = || {
            factors
                .ok_or_else(|| Error::InvalidInput(format!("method '{id}' needs a factor panel")))
        };

        match *self {
            Self::Sample { pseudo_inverse } => {
                let s = sample_covariance(window, Denominator::TMinusOne)?;
                let mut est = CovarianceEstimate::new(id, assets, s)
                    .with_param("denominator", Denominator::TMinusOne.as_str());
                if pseudo_inverse && !est.is_positive_definite() {
                    est.inversion = Inversion::PseudoInverse;
                    est = est.with_param("pinv_rel_tol", PINV_REL_TOL);
                }
                Ok(plain(est))
            }
            Self::Mtp2 { tol, max_iter } => {
                let s = sample_covariance(window, Denominator::T)?;
                let opts = Mtp2Options {
                    tol,
                    max_iter,
                    ..Mtp2Options::default()
                };
                let sol = mtp2_mle_with(&s, &opts)?;
                finish_mtp2(id, assets, sol, s, tol, max_iter, Denominator::T)
            }
            Self::Mtp2Kt { tol, max_iter } => {
                let opts = Mtp2Options {
                    tol,
                    max_iter,
                    ..Mtp2Options::default()
                };
                let sol = mtp2_mle_kendall_with(window, &opts)?;
                let mut input = kendall_tau_matrix(window)?.into_sym().into_inner();
                if let Some(r) = sol.correlation_scale.as_ref().and_then(|c| c.ridge) {
                    for i in 0..input.nrows() {
                        input[[i, i]] += r;
                    }
                }
                finish_mtp2(
                    id,
                    assets,
                    sol,
                    SymMatrix::new(input)?,
                    tol,
                    max_iter,
                    Denominator::TMinusOne,
                )
            }
            Self::Ls { rho } => {
                let s = sample_covariance(window, Denominator::T)?;
                let (rho, degenerate, source) = match rho {
                    Some(r) => (r, false, "fixed"),
                    None => {
                        let i = lw_optimal_rho(window)?;
                        (i.rho, i.degenerate, "ledoit-wolf")
                    }
                };
                let m = linear_shrinkage(&s, rho)?;
                Ok(plain(
                    CovarianceEstimate::new(id, assets, m)
                        .with_param("rho", rho)
                        .with_param("rho_source", source)
                        .with_param("rho_degenerate", degenerate)
                        .with_param("denominator", Denominator::T.as_str()),
                ))
            }
            Self::Efm => {
                let f = need_factors()?;
                let m = exact_factor_model(window, f)?;
                Ok(plain(
                    CovarianceEstimate::new(id, assets, m)
                        .with_param("factors", json!(f.factor_ids))
                        .with_param("denominator", Denominator::TMinusOne.as_str()),
                ))
            }
            Self::AfmLs => {
                let f = need_factors()?;
                let (m, intensity) = afm_ls(window, f)?;
                Ok(plain(
                    CovarianceEstimate::new(id, assets, m)
                        .with_param("factors", json!(f.factor_ids))
                        .with_param("residual_rho", intensity.rho)
                        .with_param("residual_rho_degenerate", intensity.degenerate)
                        .with_param("denominator", Denominator::TMinusOne.as_str()),
                ))
            }
            Self::Poet {
                k,
                c,
                correlation_scale,
            } => {
                let threshold = c.map_or(PoetThreshold::Auto, PoetThreshold::Fixed);
                let scale = if correlation_scale {
                    ThresholdScale::Correlation
                } else {
                    ThresholdScale::Covariance
                };
                let fit = poet(window, k, threshold, scale)?;
                Ok(plain(
                    CovarianceEstimate::new(id, assets, fit.matrix)
                        .with_param("k", k)
                        .with_param("c", json!(fit.c))
                        .with_param("c_search", c.is_none())
                        .with_param("threshold_scale", json!(scale))
                        .with_param("diagonal_fallback", fit.diagonal_fallback)
                        .with_param("denominator", Denominator::TMinusOne.as_str()),
                ))
            }
            Self::Glasso {
                lambda,
                tol,
                max_iter,
            } => {
                let opts = GlassoOptions { tol, max_iter };
                let (fit, cv) = match lambda {
                    Some(l) => {
                        let s = sample_covariance(window, Denominator::T)?;
                        (glasso(&s, l, &opts)?, None)
                    }
                    None => {
                        let cv = glasso_cv(window, &opts)?;
                        (cv.fit.clone(), Some(cv))
                    }
                };
                let mut est = CovarianceEstimate::new(id, assets, fit.sigma.to_sym())
                    .with_param("lambda", fit.lambda)
                    .with_param("tol", tol)
                    .with_param("max_iter", max_iter)
                    .with_param("iterations", fit.iterations)
                    .with_param("stationarity_residual", fit.residual)
                    .with_param("denominator", Denominator::T.as_str());
                if let Some(cv) = cv {
                    est = est
                        .with_param("cv_folds", glasso::CV_FOLDS)
                        .with_param("cv_fold_layout", "contiguous")
                        .with_param("cv_grid", glasso::CV_GRID)
                        .with_param("cv_rounds", glasso::CV_ROUNDS)
                        .with_param("cv_path", serde_json::to_value(&cv.path)?);
                }
                Ok(plain(est))
            }
        }
    }
}

fn finish_mtp2(
    id: &str,
    assets: Vec<String>,
    sol: MtpSolution,
    input: SymMatrix,
    tol: f64,
    max_iter: usize,
    denominator: Denominator,
) -> Result<Fit> {
    if !sol.converged {
        return Err(Error::NonConvergence {
            iterations: sol.iterations,
            residual: sol.kkt_residual,
        });
    }
    let input_scale = match sol.input_scale {
        InputScale::Covariance => "covariance",
        InputScale::KendallCorrelation => "kendall_correlation",
    };
    let estimate = CovarianceEstimate::new(id, assets, sol.sigma_hat.to_sym())
        .with_param("tol", tol)
        .with_param("max_iter", max_iter)
        .with_param("kkt_residual", sol.kkt_residual)
        .with_param("iterations", sol.iterations)
        .with_param("active_set_size", sol.active_set.len())
        .with_param("input_scale", input_scale)
        .with_param("denominator", denominator.as_str());
    Ok(Fit {
        estimate,
        solution: Some(sol),
        input: Some(input),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn registry_round_trips_through_json() {
        for name in METHODS {
            let spec = EstimatorSpec::from_name(name).unwrap();
            assert_eq!(spec.id(), *name);
            let text = serde_json::to_string(&spec).unwrap();
            let back: EstimatorSpec = serde_json::from_str(&text).unwrap();
            assert_eq!(back, spec);
        }
        assert!(matches!(
            EstimatorSpec::from_name("clime"),
            Err(Error::InvalidSpec(_))
        ));
        let spec: EstimatorSpec = serde_json::from_str(r#"{"method":"ls","rho":0.3}"#).unwrap();
        assert_eq!(spec, EstimatorSpec::Ls { rho: Some(0.3) });
    }

    #[test]
    fn out_of_range_rho_is_a_usage_error() {
        let panel = ReturnsPanel::from_matrix(array![[0.1, 0.2], [0.0, -0.1], [0.3, 0.1]]).unwrap();
        let err = EstimatorSpec::Ls { rho: Some(1.5) }
            .estimate(&panel, None)
            .unwrap_err();
        assert!(matches!(err, Error::RhoOutOfRange(_)));
        assert_eq!(err.kind(), crate::ErrorKind::Usage);
    }

    #[test]
    fn singular_sample_covariance_uses_pseudo_inverse() {
        let panel = ReturnsPanel::from_matrix(array![[0.1, 0.2, 0.0], [0.0, -0.1, 0.1]]).unwrap();
        let est = EstimatorSpec::from_name("sample")
            .unwrap()
            .estimate(&panel, None)
            .unwrap();
        assert_eq!(est.inversion, Inversion::PseudoInverse);
        assert!(est.is_usable());
        let x = est.solve(Array1::ones(3).view()).unwrap();
        assert!(x.iter().all(|v| v.is_finite()));

        let strict = EstimatorSpec::Sample {
            pseudo_inverse: false,
        };
        let est = strict.estimate(&panel, None).unwrap();
        assert_eq!(est.inversion, Inversion::Cholesky);
        assert!(!est.is_usable());
    }

    #[test]
    fn factor_methods_need_factors() {
        let panel = ReturnsPanel::from_matrix(array![[0.1, 0.2], [0.0, -0.1], [0.3, 0.1]]).unwrap();
        assert!(EstimatorSpec::Efm.estimate(&panel, None).is_err());
    }
}
