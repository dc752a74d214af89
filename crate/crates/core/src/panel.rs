//! Returns and factor panels.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whether a panel holds simple or log returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReturnKind {
    #[default]
    Simple,
    Log,
}

/// A T×N matrix of per-period returns with date and asset labels.
///
/// Missing cells are stored as `0.0` and flagged in `observed`; a panel
/// without a mask is fully observed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnsPanel {
    pub dates: Vec<String>,
    pub assets: Vec<String>,
    pub returns: Array2<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observed: Option<Array2<bool>>,
    #[serde(default)]
    pub kind: ReturnKind,
}

impl ReturnsPanel {
    pub fn new(dates: Vec<String>, assets: Vec<String>, returns: Array2<f64>) -> Result<Self> {
        Self::with_mask(dates, assets, returns, None)
    }

    pub fn with_mask(
        dates: Vec<String>,
        assets: Vec<String>,
        mut returns: Array2<f64>,
        observed: Option<Array2<bool>>,
    ) -> Result<Self> {
        let (t, n) = returns.dim();
        if dates.len() != t {
            return Err(Error::DimensionMismatch {
                expected: t,
                actual: dates.len(),
            });
        }
        if assets.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: assets.len(),
            });
        }
        if t == 0 || n == 0 {
            return Err(Error::EmptyPanel);
        }
        if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput(format!(
                "dates must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        if let Some(mask) = &observed {
            if mask.dim() != (t, n) {
                return Err(Error::InvalidInput(
                    "mask shape does not match returns".into(),
                ));
            }
            for ((i, j), ok) in mask.indexed_iter() {
                if !ok {
                    returns[[i, j]] = 0.0;
                }
            }
        }
        if let Some(((i, j), _)) = returns.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite return for asset {} on {}",
                assets[j], dates[i]
            )));
        }
        let observed = observed.filter(|m| m.iter().any(|ok| !ok));
        Ok(Self {
            dates,
            assets,
            returns,
            observed,
            kind: ReturnKind::Simple,
        })
    }

    /// Panel with synthetic zero-padded labels `000000…` and `A0000…`.
    pub fn from_matrix(returns: Array2<f64>) -> Result<Self> {
        let (t, n) = returns.dim();
        Self::new(default_dates(t), default_assets(n), returns)
    }

    pub fn n_periods(&self) -> usize {
        self.returns.nrows()
    }

    pub fn n_assets(&self) -> usize {
        self.returns.ncols()
    }

    pub fn is_observed(&self, t: usize, i: usize) -> bool {
        self.observed.as_ref().is_none_or(|m| m[[t, i]])
    }

    pub fn column(&self, i: usize) -> ArrayView1<'_, f64> {
        self.returns.column(i)
    }

    /// Rows `start..end`.
    pub fn window(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.n_periods() {
            return Err(Error::InvalidInput(format!(
                "window {start}..{end} outside 0..{}",
                self.n_periods()
            )));
        }
        Ok(Self {
            dates: self.dates[start..end].to_vec(),
            assets: self.assets.clone(),
            returns: self.returns.slice(ndarray::s![start..end, ..]).to_owned(),
            observed: self
                .observed
                .as_ref()
                .map(|m| m.slice(ndarray::s![start..end, ..]).to_owned())
                .filter(|m| m.iter().any(|ok| !ok)),
            kind: self.kind,
        })
    }

    /// Columns listed in `idx`, in that order.
    pub fn select_assets(&self, idx: &[usize]) -> Result<Self> {
        if idx.is_empty() {
            return Err(Error::EmptyPanel);
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= self.n_assets()) {
            return Err(Error::InvalidInput(format!(
                "asset index {bad} out of range"
            )));
        }
        Ok(Self {
            dates: self.dates.clone(),
            assets: idx.iter().map(|&i| self.assets[i].clone()).collect(),
            returns: self.returns.select(Axis(1), idx),
            observed: self
                .observed
                .as_ref()
                .map(|m| m.select(Axis(1), idx))
                .filter(|m| m.iter().any(|ok| !ok)),
            kind: self.kind,
        })
    }

    pub fn asset_index(&self, id: &str) -> Option<usize> {
        self.assets.iter().position(|a| a == id)
    }

    /// Same panel with returns converted to log returns `ln(1 + r)`.
    pub fn to_log_returns(&self) -> Result<Self> {
        if self.kind == ReturnKind::Log {
            return Ok(self.clone());
        }
        if let Some(((t, i), _)) = self.returns.indexed_iter().find(|(_, r)| **r <= -1.0) {
            return Err(Error::InvalidInput(format!(
                "return of {} on {} is at or below -100%",
                self.assets[i], self.dates[t]
            )));
        }
        let mut out = self.clone();
        out.returns.mapv_inplace(f64::ln_1p);
        out.kind = ReturnKind::Log;
        Ok(out)
    }
}

/// Market capitalizations on the same date and asset axes as a returns panel;
/// `NaN` marks a missing value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketCaps {
    pub dates: Vec<String>,
    pub assets: Vec<String>,
    pub values: Array2<f64>,
}

/// Everything a backtest reads, on one date axis.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketDataBundle {
    pub returns: ReturnsPanel,
    pub caps: Option<MarketCaps>,
    pub factors: Option<FactorPanel>,
    pub riskfree: Option<DatedSeries>,
}

impl MarketDataBundle {
    /// Checks that caps and the risk-free series share the returns' axes.
    /// Factors are matched by date when a window is estimated.
    pub fn new(
        returns: ReturnsPanel,
        caps: Option<MarketCaps>,
        factors: Option<FactorPanel>,
        riskfree: Option<DatedSeries>,
    ) -> Result<Self> {
        if let Some(c) = &caps {
            if c.dates != returns.dates || c.assets != returns.assets {
                return Err(Error::InvalidInput(
                    "market caps must share the returns' dates and assets".into(),
                ));
            }
            if c.values.dim() != returns.returns.dim() {
                return Err(Error::DimensionMismatch {
                    expected: returns.n_periods() * returns.n_assets(),
                    actual: c.values.len(),
                });
            }
        }
        if let Some(r) = &riskfree {
            if r.dates != returns.dates || r.values.len() != r.dates.len() {
                return Err(Error::InvalidInput(
                    "risk-free series must share the returns' dates".into(),
                ));
            }
        }
        Ok(Self {
            returns,
            caps,
            factors,
            riskfree,
        })
    }

    pub fn from_returns(returns: ReturnsPanel) -> Self {
        Self {
            returns,
            caps: None,
            factors: None,
            riskfree: None,
        }
    }
}

pub fn default_dates(t: usize) -> Vec<String> {
    (0..t).map(|i| format!("{i:06}")).collect()
}

pub fn default_assets(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("A{i:04}")).collect()
}

/// Observed factor returns `f_t` aligned with a returns window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorPanel {
    pub dates: Vec<String>,
    pub factor_ids: Vec<String>,
    pub factors: Array2<f64>,
}

impl FactorPanel {
    pub fn new(dates: Vec<String>, factor_ids: Vec<String>, factors: Array2<f64>) -> Result<Self> {
        let (t, k) = factors.dim();
        if dates.len() != t || factor_ids.len() != k {
            return Err(Error::InvalidInput(
                "factor panel labels do not match its shape".into(),
            ));
        }
        if k == 0 {
            return Err(Error::InvalidInput(
                "factor panel needs at least one factor".into(),
            ));
        }
        if factors.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "factor panel contains non-finite values".into(),
            ));
        }
        Ok(Self {
            dates,
            factor_ids,
            factors,
        })
    }

    pub fn from_matrix(factors: Array2<f64>) -> Result<Self> {
        let (t, k) = factors.dim();
        Self::new(
            default_dates(t),
            (0..k).map(|i| format!("F{i}")).collect(),
            factors,
        )
    }

    pub fn n_factors(&self) -> usize {
        self.factors.ncols()
    }

    /// Rows whose dates match `dates` exactly, in the same order.
    pub fn align_to(&self, dates: &[String]) -> Result<Self> {
        let mut rows = Vec::with_capacity(dates.len());
        let mut cursor = 0;
        for d in dates {
            while cursor < self.dates.len() && self.dates[cursor] < *d {
                cursor += 1;
            }
            if cursor == self.dates.len() || self.dates[cursor] != *d {
                return Err(Error::InvalidInput(format!(
                    "factor data missing for date {d}"
                )));
            }
            rows.push(cursor);
        }
        Ok(Self {
            dates: dates.to_vec(),
            factor_ids: self.factor_ids.clone(),
            factors: self.factors.select(Axis(0), &rows),
        })
    }
}

/// Per-date scalar series such as a risk-free rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatedSeries {
    pub dates: Vec<String>,
    pub values: Array1<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rejects_unsorted_dates() {
        let r = ReturnsPanel::new(
            vec!["2020-01-02".into(), "2020-01-01".into()],
            vec!["A".into()],
            array![[0.0], [0.0]],
        );
        assert!(r.is_err());
    }

    #[test]
    fn mask_zeroes_missing_cells() {
        let p = ReturnsPanel::with_mask(
            default_dates(2),
            default_assets(2),
            array![[0.1, 0.2], [0.3, 0.4]],
            Some(array![[true, false], [true, true]]),
        )
        .unwrap();
        assert_eq!(p.returns[[0, 1]], 0.0);
        assert!(!p.is_observed(0, 1));
        assert!(p.is_observed(1, 1));
        let sub = p.window(1, 2).unwrap();
        assert!(sub.observed.is_none());
    }

    #[test]
    fn select_and_window() {
        let p = ReturnsPanel::from_matrix(array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]).unwrap();
        let s = p.select_assets(&[2, 0]).unwrap();
        assert_eq!(s.assets, vec!["A0002", "A0000"]);
        assert_eq!(s.returns, array![[3.0, 1.0], [6.0, 4.0]]);
        assert!(p.window(1, 1).is_err());
    }

    #[test]
    fn factor_alignment() {
        let f = FactorPanel::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec!["mkt".into()],
            array![[1.0], [2.0], [3.0]],
        )
        .unwrap();
        let g = f.align_to(&["b".into(), "c".into()]).unwrap();
        assert_eq!(g.factors, array![[2.0], [3.0]]);
        assert!(f.align_to(&["z".into()]).is_err());
    }
}
