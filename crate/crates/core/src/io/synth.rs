//! Seeded synthetic return panels with known ground truth.
//!
//! All randomness comes from `ChaCha8Rng` seeded with `seed_from_u64`, so a
//! spec reproduces the same panel on every platform.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, spd_inverse, sym_eigen, SpdMatrix};
use crate::mtp2::single_factor_covariance;
use crate::panel::{
    default_dates, DatedSeries, FactorPanel, MarketCaps, MarketDataBundle, ReturnsPanel,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    /// Gaussian with a random sparse M-matrix precision.
    GaussianMtp2,
    /// One market factor with positive loadings plus independent noise.
    SingleFactor,
    /// Multivariate t whose scatter matrix has an M-matrix inverse.
    EllipticalTInverseM,
}

impl Generator {
    pub const NAMES: &'static [&'static str] =
        &["gaussian_mtp2", "single_factor", "elliptical_t_inverse_m"];

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "gaussian_mtp2" => Ok(Self::GaussianMtp2),
            "single_factor" => Ok(Self::SingleFactor),
            "elliptical_t_inverse_m" => Ok(Self::EllipticalTInverseM),
            other => Err(Error::InvalidSpec(format!(
                "unknown generator '{other}', expected one of {}",
                Self::NAMES.join(", ")
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::GaussianMtp2 => "gaussian_mtp2",
            Self::SingleFactor => "single_factor",
            Self::EllipticalTInverseM => "elliptical_t_inverse_m",
        }
    }
}

/// How the diagonal of a random M-matrix precision is set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagonalRule {
    /// `D = λ_max(W)·I + δ·I` with a single `δ` drawn from `diagonal_slack`:
    /// every eigenvalue is shifted by the same amount.
    #[default]
    SpectralShift,
    /// `D_ii = Σ_j W_ij + δ_i` with independent `δ_i` from `diagonal_slack`:
    /// strictly diagonally dominant.
    RowSum,
}

/// Parameters of a synthetic panel. Every field except the generator, `n`
/// and `t` has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub generator: Generator,
    pub n: usize,
    pub t: usize,
    #[serde(default)]
    pub seed: u64,
    /// Probability that an off-diagonal precision entry is nonzero.
    #[serde(default = "default_edge_prob")]
    pub edge_prob: f64,
    /// Range of the nonzero partial-dependence weights.
    #[serde(default = "default_weight_range")]
    pub weight_range: (f64, f64),
    /// Range of the diagonal surplus over the absolute row sum; its lower end
    /// bounds the smallest eigenvalue of the unit-scale precision.
    #[serde(default = "default_diagonal_slack")]
    pub diagonal_slack: (f64, f64),
    #[serde(default)]
    pub diagonal: DiagonalRule,
    /// Range of market loadings for the factor generator.
    #[serde(default = "default_beta_range")]
    pub beta_range: (f64, f64),
    /// Range of idiosyncratic variances (in units of `scale²`) for the factor generator.
    #[serde(default = "default_idio_range")]
    pub idio_range: (f64, f64),
    /// Degrees of freedom of the t generator.
    #[serde(default = "default_df")]
    pub df: f64,
    /// Return volatility unit: covariances are multiplied by `scale²`.
    #[serde(default = "default_scale")]
    pub scale: f64,
}

fn default_edge_prob() -> f64 {
    0.1
}
fn default_weight_range() -> (f64, f64) {
    (0.2, 1.0)
}
fn default_diagonal_slack() -> (f64, f64) {
    (0.1, 1.0)
}
fn default_beta_range() -> (f64, f64) {
    (0.5, 1.5)
}
fn default_idio_range() -> (f64, f64) {
    (0.5, 2.0)
}
fn default_df() -> f64 {
    5.0
}
fn default_scale() -> f64 {
    0.01
}

impl SyntheticSpec {
    pub fn new(generator: Generator, n: usize, t: usize, seed: u64) -> Self {
        Self {
            generator,
            n,
            t,
            seed,
            edge_prob: default_edge_prob(),
            weight_range: default_weight_range(),
            diagonal_slack: default_diagonal_slack(),
            diagonal: DiagonalRule::default(),
            beta_range: default_beta_range(),
            idio_range: default_idio_range(),
            df: default_df(),
            scale: default_scale(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        if self.n == 0 || self.t == 0 {
            return bad(format!(
                "n and t must be positive (n = {}, t = {})",
                self.n, self.t
            ));
        }
        if !(0.0..=1.0).contains(&self.edge_prob) {
            return bad(format!("edge_prob {} is outside [0, 1]", self.edge_prob));
        }
        let ranges = [
            ("weight_range", self.weight_range, 0.0),
            ("diagonal_slack", self.diagonal_slack, f64::MIN_POSITIVE),
            ("idio_range", self.idio_range, f64::MIN_POSITIVE),
        ];
        for (name, (lo, hi), floor) in ranges {
            if !(lo >= floor && hi >= lo && hi.is_finite()) {
                return bad(format!(
                    "{name} ({lo}, {hi}) must satisfy {floor} <= lo <= hi"
                ));
            }
        }
        let (lo, hi) = self.beta_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return bad(format!("beta_range ({lo}, {hi}) must satisfy lo <= hi"));
        }
        if self.generator == Generator::EllipticalTInverseM
            && !(self.df > 0.0 && self.df.is_finite())
        {
            return bad(format!("df must be positive, got {}", self.df));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return bad(format!("scale must be positive, got {}", self.scale));
        }
        Ok(())
    }
}

/// The distribution a synthetic panel was drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTruth {
    pub generator: Generator,
    /// Covariance for the Gaussian generators; scatter matrix for the t generator
    /// (its covariance is `df / (df − 2)` times this when `df > 2`).
    pub sigma: SpdMatrix,
    /// Inverse of `sigma`.
    pub precision: SpdMatrix,
    /// Market loadings for the factor generator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<f64>>,
}

/// Sparse M-matrix `D − W` on the unit scale; its smallest eigenvalue is at
/// least the lower end of `diagonal_slack`.
fn random_m_matrix(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Result<Array2<f64>> {
    let n = spec.n;
    let (wlo, whi) = spec.weight_range;
    let mut k = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random_bool(spec.edge_prob) {
                let w = wlo + (whi - wlo) * rng.random::<f64>();
                k[[i, j]] = -w;
                k[[j, i]] = -w;
            }
        }
    }
    let (slo, shi) = spec.diagonal_slack;
    match spec.diagonal {
        DiagonalRule::RowSum => {
            for i in 0..n {
                let off: f64 = k.row(i).iter().map(|v| v.abs()).sum();
                k[[i, i]] = off + slo + (shi - slo) * rng.random::<f64>();
            }
        }
        DiagonalRule::SpectralShift => {
            // Eigenvalues of −W; the largest of W is minus the smallest of −W.
            let lambda_max = -sym_eigen(&k)?
                .values
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min);
            let shift = lambda_max.max(0.0) + slo + (shi - slo) * rng.random::<f64>();
            for i in 0..n {
                k[[i, i]] = shift;
            }
        }
    }
    Ok(k)
}

fn gaussian_draws(chol: &Array2<f64>, t: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = chol.nrows();
    let z = Array2::from_shape_fn((t, n), |_| rng.sample::<f64, _>(StandardNormal));
    z.dot(&chol.t())
}

fn m_matrix_truth(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Result<(SpdMatrix, SpdMatrix)> {
    let unit = random_m_matrix(spec, rng)?;
    let s2 = spec.scale * spec.scale;
    let precision = unit.mapv(|v| v / s2);
    let mut sigma = spd_inverse(&unit)? * s2;
    crate::linalg::symmetrize_in_place(&mut sigma);
    Ok((SpdMatrix::new(sigma)?, SpdMatrix::new(precision)?))
}

/// Draws a panel and returns it with its ground truth. For the factor
/// generator the realized market factor is returned as well.
pub fn generate_synthetic(
    spec: &SyntheticSpec,
) -> Result<(ReturnsPanel, SyntheticTruth, Option<FactorPanel>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (n, t) = (spec.n, spec.t);
    match spec.generator {
        Generator::GaussianMtp2 => {
            let (sigma, precision) = m_matrix_truth(spec, &mut rng)?;
            let x = gaussian_draws(&cholesky(sigma.as_array())?, t, &mut rng);
            let truth = SyntheticTruth {
                generator: spec.generator,
                sigma,
                precision,
                beta: None,
            };
            Ok((ReturnsPanel::from_matrix(x)?, truth, None))
        }
        Generator::EllipticalTInverseM => {
            let (sigma, precision) = m_matrix_truth(spec, &mut rng)?;
            let mut x = gaussian_draws(&cholesky(sigma.as_array())?, t, &mut rng);
            let chi = ChiSquared::new(spec.df).map_err(|e| Error::InvalidSpec(e.to_string()))?;
            for mut row in x.rows_mut() {
                let w: f64 = chi.sample(&mut rng);
                row *= (spec.df / w).sqrt();
            }
            let truth = SyntheticTruth {
                generator: spec.generator,
                sigma,
                precision,
                beta: None,
            };
            Ok((ReturnsPanel::from_matrix(x)?, truth, None))
        }
        Generator::SingleFactor => {
            let (blo, bhi) = spec.beta_range;
            let (ilo, ihi) = spec.idio_range;
            let s2 = spec.scale * spec.scale;
            let beta: Vec<f64> = (0..n)
                .map(|_| blo + (bhi - blo) * rng.random::<f64>())
                .collect();
            let idio: Vec<f64> = (0..n)
                .map(|_| s2 * (ilo + (ihi - ilo) * rng.random::<f64>()))
                .collect();
            let sigma = single_factor_covariance(&beta, s2, &idio)?;
            let mut precision = spd_inverse(sigma.as_array())?;
            crate::linalg::symmetrize_in_place(&mut precision);

            let market =
                Array1::from_shape_fn(t, |_| spec.scale * rng.sample::<f64, _>(StandardNormal));
            let x = Array2::from_shape_fn((t, n), |(s, i)| {
                beta[i] * market[s] + idio[i].sqrt() * rng.sample::<f64, _>(StandardNormal)
            });
            let factors = FactorPanel::new(
                default_dates(t),
                vec!["MKT".into()],
                market.insert_axis(ndarray::Axis(1)),
            )?;
            let truth = SyntheticTruth {
                generator: spec.generator,
                sigma,
                precision: SpdMatrix::new(precision)?,
                beta: Some(beta),
            };
            Ok((ReturnsPanel::from_matrix(x)?, truth, Some(factors)))
        }
    }
}

/// Market caps that start log-uniform on `[1, 1000]` and compound with the
/// panel's returns.
pub fn synthetic_caps(panel: &ReturnsPanel, seed: u64) -> MarketCaps {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6361_7073);
    let (t, n) = panel.returns.dim();
    let mut values = Array2::<f64>::zeros((t, n));
    for i in 0..n {
        let mut cap = 10f64.powf(3.0 * rng.random::<f64>());
        for s in 0..t {
            cap *= 1.0 + panel.returns[[s, i]];
            values[[s, i]] = cap;
        }
    }
    MarketCaps {
        dates: panel.dates.clone(),
        assets: panel.assets.clone(),
        values,
    }
}

/// Daily risk-free rate used by synthetic bundles.
pub const SYNTHETIC_RISKFREE: f64 = 1e-4;

/// A complete backtest input: returns, compounded caps, a constant risk-free
/// rate and factors (the true market factor, or the equal-weighted market
/// return for the other generators).
pub fn generate_bundle(spec: &SyntheticSpec) -> Result<(MarketDataBundle, SyntheticTruth)> {
    let (panel, truth, factors) = generate_synthetic(spec)?;
    let factors = match factors {
        Some(f) => f,
        None => {
            let ew = panel
                .returns
                .mean_axis(ndarray::Axis(1))
                .ok_or(Error::EmptyPanel)?;
            FactorPanel::new(
                panel.dates.clone(),
                vec!["MKT".into()],
                ew.insert_axis(ndarray::Axis(1)),
            )?
        }
    };
    let caps = synthetic_caps(&panel, spec.seed);
    let riskfree = DatedSeries {
        dates: panel.dates.clone(),
        values: Array1::from_elem(panel.n_periods(), SYNTHETIC_RISKFREE),
    };
    let bundle = MarketDataBundle::new(panel, Some(caps), Some(factors), Some(riskfree))?;
    Ok((bundle, truth))
}
