use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::newton;
use crate::bcd::{self, BcdOptions, BcdState, ColumnProblem};
use crate::error::{Error, Result};
use crate::linalg::{is_positive_definite, log_det, SpdMatrix, SymMatrix};
use crate::panel::ReturnsPanel;
use crate::stats::{kendall_tau_matrix, sample_covariance, Denominator};

/// Ridge added to a singular Kendall correlation matrix before fitting.
pub const KENDALL_RIDGE: f64 = 1e-6;

/// Largest normalized off-diagonal entry for which the MLE still exists.
const MAX_CORRELATION: f64 = 1.0 - 1e-12;

/// Sweeps before the first fixed-pattern Newton refinement; doubled after each attempt.
const REFINE_AFTER: usize = 20;
const MAX_REFINE_PARAMS: usize = 1500;
/// Coordinate-descent iterates are feasible only up to the inner tolerance, so
/// their dual objective can sit slightly below the optimum.
const REFINE_OBJECTIVE_SLACK: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mtp2Options {
    /// Outer tolerance on column change (relative to `max|S|`) and on the KKT residual.
    pub tol: f64,
    /// Maximum number of outer sweeps over all columns.
    pub max_iter: usize,
    /// Tolerance for the per-column nonnegative quadratic program.
    pub inner_tol: f64,
}

impl Default for Mtp2Options {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_iter: 500,
            inner_tol: 1e-9,
        }
    }
}

/// Which matrix was fed to the solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputScale {
    Covariance,
    KendallCorrelation,
}

/// Correlation-scale fit retained by the Kendall variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationScaleFit {
    pub sigma: SpdMatrix,
    pub precision: SpdMatrix,
    /// Sample standard deviations (T − 1 denominator) used for rescaling.
    pub std_devs: Vec<f64>,
    /// Diagonal ridge added because the Kendall matrix was not positive definite.
    pub ridge: Option<f64>,
}

/// Fitted covariance/precision pair for the sign-constrained Gaussian MLE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MtpSolution {
    pub sigma_hat: SpdMatrix,
    pub k_hat: SpdMatrix,
    /// Largest violation of the four optimality conditions, on the unit-diagonal scale.
    pub kkt_residual: f64,
    pub iterations: usize,
    /// Pairs `(i, j)`, `i < j`, where the sign constraint binds and `K̂_ij = 0`.
    pub active_set: Vec<(usize, usize)>,
    pub converged: bool,
    /// Dual objective `−log det Σ` (unit-diagonal scale) before the first sweep and after each sweep.
    pub objective_trace: Vec<f64>,
    pub input_scale: InputScale,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlation_scale: Option<CorrelationScaleFit>,
}

/// Componentwise KKT violations of a candidate pair `(Σ, K)` for the input `S`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KktReport {
    /// `max |Σ_ii − S_ii| / S_ii`.
    pub diagonal: f64,
    /// `max (S_ij − Σ_ij)⁺ / √(S_ii S_jj)`.
    pub primal: f64,
    /// `max (K_ij)⁺ · √(S_ii S_jj)`.
    pub dual: f64,
    /// `max |K_ij (Σ_ij − S_ij)|`.
    pub complementarity: f64,
}

impl KktReport {
    pub fn max(&self) -> f64 {
        self.diagonal
            .max(self.primal)
            .max(self.dual)
            .max(self.complementarity)
    }
}

/// KKT violations measured after rescaling `S` to unit diagonal, so that the
/// report is invariant under `S ↦ DSD`.
pub fn kkt_report(s: &Array2<f64>, sigma: &Array2<f64>, k: &Array2<f64>) -> KktReport {
    let n = s.nrows();
    let d: Vec<f64> = (0..n).map(|i| s[[i, i]].sqrt()).collect();
    let mut r = KktReport::default();
    for i in 0..n {
        r.diagonal = r
            .diagonal
            .max((sigma[[i, i]] - s[[i, i]]).abs() / s[[i, i]]);
        for j in 0..n {
            if i == j {
                continue;
            }
            let scale = d[i] * d[j];
            r.primal = r.primal.max((s[[i, j]] - sigma[[i, j]]) / scale);
            r.dual = r.dual.max(k[[i, j]] * scale);
            r.complementarity = r
                .complementarity
                .max((k[[i, j]] * (sigma[[i, j]] - s[[i, j]])).abs());
        }
    }
    r
}

pub fn kkt_residual(s: &Array2<f64>, sigma: &Array2<f64>, k: &Array2<f64>) -> f64 {
    kkt_report(s, sigma, k).max()
}

fn validate_input(s: &SymMatrix) -> Result<()> {
    let n = s.dim();
    for i in 0..n {
        let v = s[[i, i]];
        if !(v > 0.0) {
            return Err(Error::InvalidInput(format!(
                "diagonal entry {i} must be positive, got {v}"
            )));
        }
    }
    Ok(())
}

/// Feasible, positive-definite starting point on the unit-diagonal scale.
fn initial_sigma(s: &Array2<f64>) -> Array2<f64> {
    let n = s.nrows();
    let clipped = Array2::from_shape_fn(
        (n, n),
        |(i, j)| {
            if i == j {
                1.0
            } else {
                s[[i, j]].max(0.0)
            }
        },
    );
    if is_positive_definite(&clipped) {
        return clipped;
    }
    // Equicorrelation at the largest correlation dominates every entry and is PD below 1.
    let r = s
        .indexed_iter()
        .filter(|((i, j), _)| i != j)
        .fold(0.0_f64, |m, (_, v)| m.max(*v));
    Array2::from_shape_fn((n, n), |(i, j)| if i == j { 1.0 } else { r })
}

/// Maximum-likelihood covariance under the constraint that the precision
/// matrix has nonpositive off-diagonal entries, with default options.
pub fn mtp2_mle(s: &SymMatrix, tol: f64, max_iter: usize) -> Result<MtpSolution> {
    mtp2_mle_with(
        s,
        &Mtp2Options {
            tol,
            max_iter,
            ..Mtp2Options::default()
        },
    )
}

pub fn mtp2_mle_with(s: &SymMatrix, opts: &Mtp2Options) -> Result<MtpSolution> {
    if !(opts.tol > 0.0) || opts.max_iter == 0 {
        return Err(Error::InvalidInput(
            "tolerance and iteration limit must be positive".into(),
        ));
    }
    validate_input(s)?;
    let n = s.dim();
    let d: Vec<f64> = (0..n).map(|i| s[[i, i]].sqrt()).collect();
    let mut normalized = Array2::from_shape_fn((n, n), |(i, j)| s[[i, j]] / (d[i] * d[j]));
    for i in 0..n {
        normalized[[i, i]] = 1.0;
    }
    for ((i, j), v) in normalized.indexed_iter() {
        if i < j && *v >= MAX_CORRELATION {
            return Err(Error::InvalidInput(format!(
                "variables {i} and {j} are perfectly correlated; the constrained MLE does not exist"
            )));
        }
    }

    let mut bcd_opts = BcdOptions {
        problem: ColumnProblem {
            lambda: 0.0,
            nonnegative: true,
        },
        tol: opts.tol,
        max_sweeps: opts.max_iter,
        inner_tol: opts.inner_tol,
        inner_max_passes: 100_000,
    };
    let residual = |sig: &Array2<f64>, k: &Array2<f64>| kkt_residual(&normalized, sig, k);
    let mut state = BcdState::new(initial_sigma(&normalized))?;
    let mut converged = false;
    let mut next_refine = REFINE_AFTER;
    while state.sweeps < opts.max_iter {
        bcd_opts.max_sweeps = next_refine.min(opts.max_iter);
        if bcd::run(&normalized, &mut state, &bcd_opts, residual)? {
            converged = true;
            break;
        }
        next_refine *= 2;
        if let Some((sigma, k)) = newton::fixed_pattern_mle(
            &normalized,
            &state.precision,
            &state.zero,
            MAX_REFINE_PARAMS,
        ) {
            let last = *state.objective.last().unwrap_or(&f64::INFINITY);
            let obj = match log_det(&sigma) {
                Ok(v) => -v,
                Err(_) => continue,
            };
            if residual(&sigma, &k) <= opts.tol
                && obj <= last + REFINE_OBJECTIVE_SLACK * last.abs().max(1.0)
            {
                state.sigma = sigma;
                state.precision = k;
                state.objective.push(obj);
                converged = true;
                break;
            }
        }
    }

    // Pin the binding constraints to exact zeros; positive entries left by
    // rounding are within tolerance of the bound.
    let mut k = state.precision;
    let mut active_set = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if state.zero[[i, j]] || k[[i, j]] > 0.0 {
                k[[i, j]] = 0.0;
                k[[j, i]] = 0.0;
                active_set.push((i, j));
            }
        }
    }
    let kkt = kkt_residual(&normalized, &state.sigma, &k);

    let sigma_hat = Array2::from_shape_fn((n, n), |(i, j)| state.sigma[[i, j]] * (d[i] * d[j]));
    let k_hat = Array2::from_shape_fn((n, n), |(i, j)| k[[i, j]] / (d[i] * d[j]));
    Ok(MtpSolution {
        sigma_hat: SpdMatrix::new(sigma_hat)?,
        k_hat: SpdMatrix::new(k_hat)?,
        kkt_residual: kkt,
        iterations: state.sweeps,
        active_set,
        converged: converged && kkt <= opts.tol,
        objective_trace: state.objective,
        input_scale: InputScale::Covariance,
        correlation_scale: None,
    })
}

/// Fits the constrained MLE to the Kendall correlation matrix of `panel` and
/// maps the fit back to the covariance scale of the returns.
pub fn mtp2_mle_kendall(panel: &ReturnsPanel, tol: f64, max_iter: usize) -> Result<MtpSolution> {
    mtp2_mle_kendall_with(
        panel,
        &Mtp2Options {
            tol,
            max_iter,
            ..Mtp2Options::default()
        },
    )
}

pub fn mtp2_mle_kendall_with(panel: &ReturnsPanel, opts: &Mtp2Options) -> Result<MtpSolution> {
    let tau = kendall_tau_matrix(panel)?;
    let cov = sample_covariance(panel, Denominator::TMinusOne)?;
    let n = panel.n_assets();
    let mut sd = Vec::with_capacity(n);
    for i in 0..n {
        let v = cov[[i, i]];
        if !(v > 0.0) {
            return Err(Error::ZeroVarianceColumn {
                asset: panel.assets[i].clone(),
            });
        }
        sd.push(v.sqrt());
    }

    let mut s = tau.into_sym().into_inner();
    let mut ridge = None;
    if !is_positive_definite(&s) {
        for i in 0..n {
            s[[i, i]] += KENDALL_RIDGE;
        }
        ridge = Some(KENDALL_RIDGE);
    }
    let fit = mtp2_mle_with(&SymMatrix::new(s)?, opts)?;

    let sigma_cov = Array2::from_shape_fn((n, n), |(i, j)| fit.sigma_hat[[i, j]] * (sd[i] * sd[j]));
    let k_cov = Array2::from_shape_fn((n, n), |(i, j)| fit.k_hat[[i, j]] / (sd[i] * sd[j]));
    Ok(MtpSolution {
        sigma_hat: SpdMatrix::new(sigma_cov)?,
        k_hat: SpdMatrix::new(k_cov)?,
        kkt_residual: fit.kkt_residual,
        iterations: fit.iterations,
        active_set: fit.active_set,
        converged: fit.converged,
        objective_trace: fit.objective_trace,
        input_scale: InputScale::KendallCorrelation,
        correlation_scale: Some(CorrelationScaleFit {
            sigma: fit.sigma_hat,
            precision: fit.k_hat,
            std_devs: sd,
            ridge,
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::spd_inverse;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn fit(s: Array2<f64>) -> MtpSolution {
        mtp2_mle(&SymMatrix::new(s).unwrap(), 1e-9, 500).unwrap()
    }

    #[test]
    fn diagonal_input_is_its_own_fit() {
        let f = fit(array![[2.0, 0.0], [0.0, 3.0]]);
        assert_abs_diff_eq!(f.sigma_hat[[0, 0]], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.sigma_hat[[0, 1]], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.k_hat[[0, 0]], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(f.k_hat[[1, 1]], 1.0 / 3.0, epsilon = 1e-12);
        assert!(f.converged);
    }

    #[test]
    fn positive_correlation_is_unconstrained() {
        let f = fit(array![[1.0, 0.5], [0.5, 1.0]]);
        let expected = array![[4.0 / 3.0, -2.0 / 3.0], [-2.0 / 3.0, 4.0 / 3.0]];
        for (a, b) in f.k_hat.iter().zip(expected.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
        assert!(f.active_set.is_empty());
    }

    #[test]
    fn negative_correlation_is_clipped() {
        let f = fit(array![[1.0, -0.3], [-0.3, 1.0]]);
        for (a, b) in f.sigma_hat.iter().zip(Array2::<f64>::eye(2).iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        assert_eq!(f.k_hat[[0, 1]], 0.0);
        assert_eq!(f.active_set, vec![(0, 1)]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let s = SymMatrix::new(array![[1.0, 0.0], [0.0, 0.0]]).unwrap();
        assert!(matches!(
            mtp2_mle(&s, 1e-7, 10),
            Err(Error::InvalidInput(_))
        ));
        let s = SymMatrix::new(array![[1.0, 1.0], [1.0, 1.0]]).unwrap();
        assert!(matches!(
            mtp2_mle(&s, 1e-7, 10),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn precision_is_inverse_of_covariance() {
        let s = array![[1.0, 0.4, -0.2], [0.4, 2.0, 0.3], [-0.2, 0.3, 1.5]];
        let f = fit(s);
        let inv = spd_inverse(&f.sigma_hat).unwrap();
        for (a, b) in f.k_hat.iter().zip(inv.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-8);
        }
        assert!(f.kkt_residual <= 1e-8);
    }
}
