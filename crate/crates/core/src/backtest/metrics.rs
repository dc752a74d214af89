use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Months per year used for annualization.
pub const MONTHS_PER_YEAR: f64 = 12.0;
/// Window length of the moving rolling series, in months.
pub const ROLLING_WINDOW: usize = 60;

fn check_len(x: &[f64]) -> Result<()> {
    if x.len() < 2 {
        return Err(Error::InsufficientData {
            required: 2,
            actual: x.len(),
        });
    }
    Ok(())
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample standard deviation with denominator `H − 1`.
pub fn sample_std(x: &[f64]) -> Result<f64> {
    check_len(x)?;
    let m = mean(x);
    let ss: f64 = x.iter().map(|v| (v - m) * (v - m)).sum();
    Ok((ss / (x.len() - 1) as f64).sqrt())
}

pub fn annualized_std(monthly: &[f64]) -> Result<f64> {
    Ok(sample_std(monthly)? * MONTHS_PER_YEAR.sqrt())
}

/// A mean-over-volatility ratio, per month and annualized by `√12`.
///
/// With zero volatility the ratio is `±∞` for a nonzero mean and `NaN` for a zero mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ratio {
    #[serde(with = "crate::serde_float")]
    pub monthly: f64,
    #[serde(with = "crate::serde_float")]
    pub annualized: f64,
    pub zero_volatility: bool,
}

fn ratio_of(x: &[f64]) -> Result<Ratio> {
    let sd = sample_std(x)?;
    let m = mean(x);
    let monthly = if sd > 0.0 {
        m / sd
    } else if m > 0.0 {
        f64::INFINITY
    } else if m < 0.0 {
        f64::NEG_INFINITY
    } else {
        f64::NAN
    };
    Ok(Ratio {
        monthly,
        annualized: monthly * MONTHS_PER_YEAR.sqrt(),
        zero_volatility: sd == 0.0,
    })
}

/// Mean excess return over its standard deviation.
pub fn sharpe_ratio(monthly: &[f64], riskfree: &[f64]) -> Result<Ratio> {
    if monthly.len() != riskfree.len() {
        return Err(Error::DimensionMismatch {
            expected: monthly.len(),
            actual: riskfree.len(),
        });
    }
    let excess: Vec<f64> = monthly.iter().zip(riskfree).map(|(r, f)| r - f).collect();
    ratio_of(&excess)
}

/// Mean raw return over its standard deviation.
pub fn information_ratio(monthly: &[f64]) -> Result<Ratio> {
    ratio_of(monthly)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub months: usize,
    #[serde(with = "crate::serde_float")]
    pub monthly_std: f64,
    #[serde(with = "crate::serde_float")]
    pub annualized_std: f64,
    /// Absent when no risk-free series was supplied.
    pub sharpe: Option<Ratio>,
    pub information_ratio: Ratio,
}

impl Metrics {
    pub fn compute(monthly: &[f64], riskfree: Option<&[f64]>) -> Result<Self> {
        let monthly_std = sample_std(monthly)?;
        Ok(Self {
            months: monthly.len(),
            monthly_std,
            annualized_std: monthly_std * MONTHS_PER_YEAR.sqrt(),
            sharpe: riskfree.map(|rf| sharpe_ratio(monthly, rf)).transpose()?,
            information_ratio: information_ratio(monthly)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RollingWindow {
    /// Metrics over months `1..=h` for `h = 60..=H`.
    Cumulative,
    /// Metrics over months `h − 59..=h` for `h = 60..=H`.
    SixtyMonthWindows,
}

/// One point of a rolling metric series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RollingPoint {
    /// Number of months from the start of the evaluation to the end of this window.
    pub horizon: usize,
    pub metrics: Metrics,
}

pub fn rolling_metric_series(
    monthly: &[f64],
    riskfree: Option<&[f64]>,
    window: RollingWindow,
) -> Result<Vec<RollingPoint>> {
    if monthly.len() < ROLLING_WINDOW {
        return Err(Error::InsufficientData {
            required: ROLLING_WINDOW,
            actual: monthly.len(),
        });
    }
    (ROLLING_WINDOW..=monthly.len())
        .map(|h| {
            let start = match window {
                RollingWindow::Cumulative => 0,
                RollingWindow::SixtyMonthWindows => h - ROLLING_WINDOW,
            };
            Ok(RollingPoint {
                horizon: h,
                metrics: Metrics::compute(&monthly[start..h], riskfree.map(|rf| &rf[start..h]))?,
            })
        })
        .collect()
}
