//! Portfolio weights from covariance and expected-return estimates.

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::CovarianceEstimate;
use crate::linalg::{spd_solve, SpdMatrix};
use crate::panel::ReturnsPanel;

/// Trading days in the momentum look-back year.
pub const MOMENTUM_LOOKBACK: usize = 252;
/// Most recent trading days excluded from the momentum window.
pub const MOMENTUM_SKIP: usize = 21;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioWeights {
    pub assets: Vec<String>,
    pub weights: Vec<f64>,
}

impl PortfolioWeights {
    fn normalized(assets: Vec<String>, raw: Array1<f64>) -> Result<Self> {
        check_len(&assets, raw.len())?;
        let total = raw.sum();
        if !(total.abs() > 0.0) || !total.is_finite() {
            return Err(Error::InvalidInput(
                "weights cannot be normalized: their sum is zero or not finite".into(),
            ));
        }
        Ok(Self {
            assets,
            weights: raw.iter().map(|w| w / total).collect(),
        })
    }

    pub fn as_array(&self) -> Array1<f64> {
        Array1::from(self.weights.clone())
    }

    /// `wᵀΣw`.
    pub fn variance(&self, sigma: &ndarray::Array2<f64>) -> f64 {
        let w = self.as_array();
        w.dot(&sigma.dot(&w))
    }
}

fn check_len(assets: &[String], n: usize) -> Result<()> {
    if assets.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: assets.len(),
        });
    }
    Ok(())
}

/// Per-asset expected returns, per trading day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectedReturns {
    pub assets: Vec<String>,
    pub mu_hat: Vec<f64>,
    pub signal_id: String,
    /// Assets whose window contained a return ≤ −100% and fell back to the arithmetic mean.
    #[serde(default)]
    pub arithmetic_fallback: Vec<String>,
}

/// `Σ⁻¹1 / 1ᵀΣ⁻¹1`.
pub fn gmv_weights(sigma: &SpdMatrix, assets: &[String]) -> Result<PortfolioWeights> {
    let n = sigma.dim();
    check_len(assets, n)?;
    let x = spd_solve(sigma, Array1::ones(n).view())?;
    PortfolioWeights::normalized(assets.to_vec(), x)
}

/// GMV weights using the estimate's own inversion rule (Cholesky or pseudo-inverse).
pub fn gmv_from_estimate(est: &CovarianceEstimate) -> Result<PortfolioWeights> {
    let x = est.solve(Array1::ones(est.assets.len()).view())?;
    PortfolioWeights::normalized(est.assets.clone(), x)
}

fn markowitz_from_solves(
    assets: &[String],
    ones_solve: Array1<f64>,
    mu_solve: Array1<f64>,
    mu: ArrayView1<f64>,
    target: f64,
) -> Result<PortfolioWeights> {
    let a = ones_solve.sum();
    let b = mu_solve.sum();
    let c = mu.dot(&mu_solve);
    let det = a * c - b * b;
    if !(det.abs() > 1e-12 * (a * c).abs()) {
        return Err(Error::DegenerateTarget);
    }
    // Same solution as [(C − BR)Σ⁻¹1 + (AR − B)Σ⁻¹μ]/(AC − B²), written as
    // g + (R − B/A)·h with g the GMV portfolio and h a budget-neutral
    // direction of unit expected return; this avoids cancellation.
    let g = &ones_solve / a;
    let h = (&mu_solve - &(&ones_solve * (b / a))) / (det / a);
    let mut w = &g + &(&h * (target - b / a));
    // One refinement step inside span{g, h}, which keeps the first-order conditions.
    let (g1, h1, gm, hm) = (g.sum(), h.sum(), mu.dot(&g), mu.dot(&h));
    let r1 = 1.0 - w.sum();
    let r2 = target - mu.dot(&w);
    let d = g1 * hm - h1 * gm;
    if d != 0.0 && d.is_finite() {
        let x = (r1 * hm - h1 * r2) / d;
        let y = (g1 * r2 - gm * r1) / d;
        w = w + &g * x + &h * y;
    }
    Ok(PortfolioWeights {
        assets: assets.to_vec(),
        weights: w.to_vec(),
    })
}

/// Minimum-variance weights with `Σ w_i = 1` and `wᵀμ = target`, in closed form.
pub fn markowitz_weights(
    sigma: &SpdMatrix,
    mu: &ExpectedReturns,
    target: f64,
) -> Result<PortfolioWeights> {
    let n = sigma.dim();
    check_len(&mu.assets, n)?;
    let m = Array1::from(mu.mu_hat.clone());
    let ones_solve = spd_solve(sigma, Array1::ones(n).view())?;
    let mu_solve = spd_solve(sigma, m.view())?;
    markowitz_from_solves(&mu.assets, ones_solve, mu_solve, m.view(), target)
}

/// Markowitz weights using the estimate's own inversion rule.
pub fn markowitz_from_estimate(
    est: &CovarianceEstimate,
    mu: &ExpectedReturns,
    target: f64,
) -> Result<PortfolioWeights> {
    check_len(&mu.assets, est.assets.len())?;
    let m = Array1::from(mu.mu_hat.clone());
    let ones_solve = est.solve(Array1::ones(m.len()).view())?;
    let mu_solve = est.solve(m.view())?;
    markowitz_from_solves(&est.assets, ones_solve, mu_solve, m.view(), target)
}

/// Per-day geometric mean return over trading days `[t − 252, t − 21)`.
pub fn momentum_signal(panel: &ReturnsPanel, as_of: usize) -> Result<ExpectedReturns> {
    if as_of < MOMENTUM_LOOKBACK || as_of > panel.n_periods() {
        return Err(Error::InsufficientHistory {
            required: MOMENTUM_LOOKBACK,
            available: as_of.min(panel.n_periods()),
            as_of,
        });
    }
    let window = panel.returns.slice(ndarray::s![
        as_of - MOMENTUM_LOOKBACK..as_of - MOMENTUM_SKIP,
        ..
    ]);
    let len = window.nrows() as f64;
    let mut mu_hat = Vec::with_capacity(panel.n_assets());
    let mut fallback = Vec::new();
    for (i, col) in window.columns().into_iter().enumerate() {
        if col.iter().any(|r| 1.0 + r <= 0.0) {
            mu_hat.push(col.sum() / len);
            fallback.push(panel.assets[i].clone());
        } else {
            let log_sum: f64 = col.iter().map(|r| r.ln_1p()).sum();
            mu_hat.push((log_sum / len).exp_m1());
        }
    }
    Ok(ExpectedReturns {
        assets: panel.assets.clone(),
        mu_hat,
        signal_id: "momentum-252-21".into(),
        arithmetic_fallback: fallback,
    })
}

/// Equal weights on the top `ceil(fraction·N)` assets by `μ̂` (ties by asset
/// id) and the mean `μ̂` of that group as the return target.
pub fn ew_tq_target(mu: &ExpectedReturns, fraction: f64) -> Result<(f64, PortfolioWeights)> {
    let n = mu.mu_hat.len();
    check_len(&mu.assets, n)?;
    if n == 0 {
        return Err(Error::EmptyPanel);
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "fraction must be in (0, 1], got {fraction}"
        )));
    }
    let m = ((fraction * n as f64).ceil() as usize).clamp(1, n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        mu.mu_hat[b]
            .total_cmp(&mu.mu_hat[a])
            .then_with(|| mu.assets[a].cmp(&mu.assets[b]))
    });
    let mut weights = vec![0.0; n];
    let mut target = 0.0;
    for &i in &order[..m] {
        weights[i] = 1.0 / m as f64;
        target += mu.mu_hat[i];
    }
    Ok((
        target / m as f64,
        PortfolioWeights {
            assets: mu.assets.clone(),
            weights,
        },
    ))
}

pub fn equal_weight(assets: &[String]) -> Result<PortfolioWeights> {
    if assets.is_empty() {
        return Err(Error::EmptyPanel);
    }
    let w = 1.0 / assets.len() as f64;
    Ok(PortfolioWeights {
        assets: assets.to_vec(),
        weights: vec![w; assets.len()],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::default_assets;
    use ndarray::{array, Array2};

    fn spd(a: Array2<f64>) -> SpdMatrix {
        SpdMatrix::new(a).unwrap()
    }

    fn mu(values: &[f64]) -> ExpectedReturns {
        ExpectedReturns {
            assets: default_assets(values.len()),
            mu_hat: values.to_vec(),
            signal_id: "test".into(),
            arithmetic_fallback: vec![],
        }
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn gmv_examples() {
        let w = gmv_weights(&SpdMatrix::identity(4), &default_assets(4)).unwrap();
        assert_eq!(w.weights, vec![0.25; 4]);
        let w = gmv_weights(&spd(array![[1.0, 0.0], [0.0, 4.0]]), &default_assets(2)).unwrap();
        assert!(close(&w.weights, &[0.8, 0.2], 1e-15));
        let w = gmv_weights(&spd(array![[2.0, 1.0], [1.0, 2.0]]), &default_assets(2)).unwrap();
        assert!(close(&w.weights, &[0.5, 0.5], 1e-15));
    }

    #[test]
    fn gmv_rejects_indefinite_input() {
        assert!(SpdMatrix::new(array![[1.0, 2.0], [2.0, 1.0]]).is_err());
    }

    #[test]
    fn markowitz_examples() {
        let id = SpdMatrix::identity(2);
        let w = markowitz_weights(&id, &mu(&[0.1, 0.2]), 0.15).unwrap();
        assert!(close(&w.weights, &[0.5, 0.5], 1e-12));
        let w = markowitz_weights(&id, &mu(&[0.1, 0.2]), 0.2).unwrap();
        assert!(close(&w.weights, &[0.0, 1.0], 1e-12));
        assert!(matches!(
            markowitz_weights(&id, &mu(&[0.1, 0.1]), 0.1),
            Err(Error::DegenerateTarget)
        ));
    }

    #[test]
    fn markowitz_at_gmv_return_is_gmv() {
        let sigma = spd(array![[2.0, 0.3, 0.1], [0.3, 1.0, -0.2], [0.1, -0.2, 1.5]]);
        let m = mu(&[0.01, 0.03, 0.02]);
        let g = gmv_weights(&sigma, &m.assets).unwrap();
        let r: f64 = g.weights.iter().zip(&m.mu_hat).map(|(w, u)| w * u).sum();
        let w = markowitz_weights(&sigma, &m, r).unwrap();
        assert!(close(&w.weights, &g.weights, 1e-12));
    }

    #[test]
    fn momentum_examples() {
        let n_rows = 300;
        let constant = Array2::from_elem((n_rows, 1), 0.002);
        let p = ReturnsPanel::from_matrix(constant).unwrap();
        let m = momentum_signal(&p, 260).unwrap();
        assert!((m.mu_hat[0] - 0.002).abs() < 1e-15);

        let alt = Array2::from_shape_fn((n_rows, 1), |(t, _)| if t % 2 == 0 { 0.1 } else { -0.1 });
        let p = ReturnsPanel::from_matrix(alt).unwrap();
        // An odd-length window: 116 up days and 115 down days starting from t = 8.
        let m = momentum_signal(&p, 260).unwrap();
        let expected = (1.1f64.powi(116) * 0.9f64.powi(115)).powf(1.0 / 231.0) - 1.0;
        assert!((m.mu_hat[0] - expected).abs() < 1e-14);
        let shifted = momentum_signal(&p, 261).unwrap();
        let expected = (1.1f64.powi(115) * 0.9f64.powi(116)).powf(1.0 / 231.0) - 1.0;
        assert!((shifted.mu_hat[0] - expected).abs() < 1e-14);
        // The two windows together hold 231 up and 231 down days.
        let pair = ((1.0 + m.mu_hat[0]) * (1.0 + shifted.mu_hat[0])).sqrt() - 1.0;
        assert!((pair - ((1.1f64 * 0.9).sqrt() - 1.0)).abs() < 1e-14);
        assert!((pair + 0.005013).abs() < 1e-6);

        let zeros = ReturnsPanel::from_matrix(Array2::zeros((n_rows, 2))).unwrap();
        assert_eq!(momentum_signal(&zeros, 252).unwrap().mu_hat, vec![0.0, 0.0]);
        assert!(matches!(
            momentum_signal(&zeros, 251),
            Err(Error::InsufficientHistory { .. })
        ));
    }

    #[test]
    fn momentum_falls_back_on_total_loss() {
        let mut r = Array2::from_elem((260, 2), 0.01);
        r[[20, 1]] = -1.0;
        let p = ReturnsPanel::from_matrix(r.clone()).unwrap();
        let m = momentum_signal(&p, 260).unwrap();
        assert_eq!(m.arithmetic_fallback, vec!["A0001".to_string()]);
        let window = r.slice(ndarray::s![8..239, 1]);
        assert!((m.mu_hat[1] - window.sum() / 231.0).abs() < 1e-15);
    }

    #[test]
    fn ew_tq_examples() {
        let (r, w) = ew_tq_target(&mu(&[1.0, 2.0, 3.0, 4.0, 5.0]), 0.2).unwrap();
        assert_eq!(r, 5.0);
        assert_eq!(w.weights, vec![0.0, 0.0, 0.0, 0.0, 1.0]);

        let (r, w) = ew_tq_target(&mu(&[0.3; 6]), 0.2).unwrap();
        assert_eq!(r, 0.3);
        assert_eq!(w.weights, vec![0.5, 0.5, 0.0, 0.0, 0.0, 0.0]);

        let values: Vec<f64> = (1..=10).map(|k| 0.01 * k as f64).collect();
        let (r, _) = ew_tq_target(&mu(&values), 0.2).unwrap();
        assert!((r - 0.095).abs() < 1e-15);
    }

    #[test]
    fn equal_weight_examples() {
        assert_eq!(equal_weight(&default_assets(1)).unwrap().weights, vec![1.0]);
        assert_eq!(
            equal_weight(&default_assets(4)).unwrap().weights,
            vec![0.25; 4]
        );
        let s: f64 = equal_weight(&default_assets(3))
            .unwrap()
            .weights
            .iter()
            .sum();
        assert!((s - 1.0).abs() <= 1e-16);
    }
}
