//! Rolling out-of-sample evaluation: monthly universe construction,
//! re-estimation, rebalancing and performance metrics.

pub mod metrics;
pub mod universe;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::EstimatorSpec;
use crate::panel::MarketDataBundle;
use crate::portfolio::{
    equal_weight, ew_tq_target, gmv_from_estimate, markowitz_from_estimate, momentum_signal,
    MOMENTUM_LOOKBACK,
};

pub use metrics::{
    annualized_std, information_ratio, rolling_metric_series, sharpe_ratio, Metrics, Ratio,
    RollingPoint, RollingWindow,
};
pub use universe::{build_universe, UniverseParams, UniverseSelection};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    Gmv,
    /// Markowitz weights targeting the return of the equal-weighted top-quantile
    /// momentum portfolio; falls back to GMV on a degenerate target.
    MarkowitzMomentum,
    EqualWeight,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UniverseRule {
    /// Completeness, correlation and market-cap filter.
    #[default]
    Filter,
    /// Every asset in the panel, no caps needed.
    AllAssets,
}

/// Within-period return accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Accounting {
    /// `Π_s (1 + wᵀr_s) − 1`: weights reset every day.
    #[default]
    Compounded,
    /// `Σ_i w_i (Π_s (1 + r_is) − 1)`: positions drift with prices.
    Drift,
}

fn default_rebalance() -> usize {
    21
}
fn default_horizon() -> usize {
    360
}
fn default_cut() -> f64 {
    0.95
}
fn default_history() -> usize {
    1260
}
fn default_completeness() -> f64 {
    0.95
}
fn default_fraction() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BacktestConfig {
    /// Number of assets held each period.
    pub portfolio_size: usize,
    /// Estimation window in trading days.
    pub estimation_window: usize,
    #[serde(default = "default_rebalance")]
    pub rebalance_days: usize,
    /// Upper bound on evaluated periods; fewer are run if the data ends first.
    #[serde(default = "default_horizon")]
    pub horizon_months: usize,
    pub estimator: EstimatorSpec,
    #[serde(default)]
    pub strategy: Strategy,
    #[serde(default = "default_cut")]
    pub correlation_cut: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub universe: UniverseRule,
    #[serde(default = "default_history")]
    pub history_days: usize,
    #[serde(default = "default_completeness")]
    pub completeness: f64,
    #[serde(default)]
    pub accounting: Accounting,
    /// Share of assets in the equal-weighted top-quantile target portfolio.
    #[serde(default = "default_fraction")]
    pub top_fraction: f64,
    /// Estimate on `ln(1 + r)` instead of simple returns.
    #[serde(default)]
    pub log_returns: bool,
    /// Row index of the first investment date; defaults to the earliest feasible row.
    #[serde(default)]
    pub first_period: Option<usize>,
}

impl BacktestConfig {
    pub fn new(portfolio_size: usize, estimation_window: usize, estimator: EstimatorSpec) -> Self {
        Self {
            portfolio_size,
            estimation_window,
            rebalance_days: default_rebalance(),
            horizon_months: default_horizon(),
            estimator,
            strategy: Strategy::Gmv,
            correlation_cut: default_cut(),
            seed: 0,
            universe: UniverseRule::Filter,
            history_days: default_history(),
            completeness: default_completeness(),
            accounting: Accounting::Compounded,
            top_fraction: default_fraction(),
            log_returns: false,
            first_period: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidSpec(m.to_string()));
        if self.portfolio_size == 0 {
            return bad("portfolio_size must be at least 1");
        }
        if self.estimation_window < 2 {
            return bad("estimation_window must be at least 2");
        }
        if self.rebalance_days == 0 {
            return bad("rebalance_days must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.completeness) {
            return bad("completeness must be in [0, 1]");
        }
        if !(self.top_fraction > 0.0 && self.top_fraction <= 1.0) {
            return bad("top_fraction must be in (0, 1]");
        }
        if self.correlation_cut.is_nan() {
            return bad("correlation_cut must be a number");
        }
        if let Some(s) = self.first_period {
            if s < self.estimation_window {
                return bad("first_period must leave a full estimation window before it");
            }
            if self.strategy == Strategy::MarkowitzMomentum && s < MOMENTUM_LOOKBACK {
                return bad("first_period must leave a full momentum year before it");
            }
        }
        self.estimator.validate()
    }

    fn first_row(&self) -> usize {
        self.first_period.unwrap_or_else(|| match self.strategy {
            Strategy::MarkowitzMomentum => self.estimation_window.max(MOMENTUM_LOOKBACK),
            _ => self.estimation_window,
        })
    }
}

/// A period that produced no return, or one that needed a fallback.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodNote {
    pub period: usize,
    pub date: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestResult {
    pub config: BacktestConfig,
    /// Periods attempted, including skipped ones.
    pub periods_attempted: usize,
    /// First holding date of each completed period.
    pub period_dates: Vec<String>,
    pub monthly_returns: Vec<f64>,
    /// Compounded risk-free return over each completed period.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub riskfree_monthly: Option<Vec<f64>>,
    pub universe_history: Vec<Vec<String>>,
    pub weights_history: Vec<Vec<f64>>,
    pub fallbacks: Vec<PeriodNote>,
    pub failures: Vec<PeriodNote>,
    /// Absent with fewer than two completed periods.
    pub metrics: Option<Metrics>,
}

impl BacktestResult {
    pub fn recompute_metrics(&self) -> Result<Metrics> {
        Metrics::compute(&self.monthly_returns, self.riskfree_monthly.as_deref())
    }

    pub fn rolling(&self, window: RollingWindow) -> Result<Vec<RollingPoint>> {
        rolling_metric_series(
            &self.monthly_returns,
            self.riskfree_monthly.as_deref(),
            window,
        )
    }
}

enum Outcome {
    Done {
        date: String,
        ret: f64,
        riskfree: Option<f64>,
        assets: Vec<String>,
        weights: Vec<f64>,
        fallback: Option<String>,
    },
    Skipped {
        date: String,
        message: String,
    },
}

fn period_return(
    data: &MarketDataBundle,
    universe: &[usize],
    weights: &[f64],
    start: usize,
    days: usize,
    accounting: Accounting,
) -> f64 {
    let r = &data.returns.returns;
    match accounting {
        Accounting::Compounded => {
            let mut growth = 1.0;
            for s in start..start + days {
                let day: f64 = universe
                    .iter()
                    .zip(weights)
                    .map(|(&i, w)| w * r[[s, i]])
                    .sum();
                growth *= 1.0 + day;
            }
            growth - 1.0
        }
        Accounting::Drift => universe
            .iter()
            .zip(weights)
            .map(|(&i, w)| {
                let g: f64 = (start..start + days).map(|s| 1.0 + r[[s, i]]).product();
                w * (g - 1.0)
            })
            .sum(),
    }
}

fn run_period(config: &BacktestConfig, data: &MarketDataBundle, start: usize) -> Result<Outcome> {
    let panel = &data.returns;
    let date = panel.dates[start].clone();
    let universe = match config.universe {
        UniverseRule::AllAssets => (0..panel.n_assets()).collect::<Vec<_>>(),
        UniverseRule::Filter => {
            let caps = data.caps.as_ref().ok_or_else(|| {
                Error::MissingCaps("the universe filter ranks assets by market cap".into())
            })?;
            let params = UniverseParams {
                n: config.portfolio_size,
                history_days: config.history_days,
                completeness: config.completeness,
                correlation_cut: config.correlation_cut,
                holding_days: config.rebalance_days,
            };
            build_universe(panel, caps, start, &params)?.assets
        }
    };
    let names: Vec<String> = universe.iter().map(|&i| panel.assets[i].clone()).collect();
    let skip = |message: String| {
        Ok(Outcome::Skipped {
            date: date.clone(),
            message,
        })
    };

    let mut fallback = None;
    let weights = if config.strategy == Strategy::EqualWeight {
        equal_weight(&names)?
    } else {
        let mut window = panel
            .window(start - config.estimation_window, start)?
            .select_assets(&universe)?;
        if config.log_returns {
            window = match window.to_log_returns() {
                Ok(w) => w,
                Err(e) => return skip(format!("log returns: {e}")),
            };
        }
        let factors = match (&data.factors, config.estimator.needs_factors()) {
            (Some(f), true) => Some(f.align_to(&window.dates)?),
            _ => None,
        };
        let est = match config.estimator.estimate(&window, factors.as_ref()) {
            Ok(e) => e,
            Err(e) => return skip(format!("estimator {}: {e}", config.estimator.id())),
        };
        if !est.is_usable() {
            return skip(format!(
                "estimator {} returned a matrix that is not positive definite",
                config.estimator.id()
            ));
        }
        let result = match config.strategy {
            Strategy::Gmv => gmv_from_estimate(&est),
            Strategy::MarkowitzMomentum => {
                let history = panel.window(0, start)?.select_assets(&universe)?;
                let mu = momentum_signal(&history, start)?;
                if !mu.arithmetic_fallback.is_empty() {
                    fallback = Some(format!(
                        "arithmetic momentum for {}",
                        mu.arithmetic_fallback.join(", ")
                    ));
                }
                let (target, _) = ew_tq_target(&mu, config.top_fraction)?;
                match markowitz_from_estimate(&est, &mu, target) {
                    Err(Error::DegenerateTarget) => {
                        fallback = Some("degenerate return target; used GMV weights".into());
                        gmv_from_estimate(&est)
                    }
                    other => other,
                }
            }
            Strategy::EqualWeight => unreachable!(),
        };
        match result {
            Ok(w) => w,
            Err(e) => return skip(format!("weights: {e}")),
        }
    };

    let ret = period_return(
        data,
        &universe,
        &weights.weights,
        start,
        config.rebalance_days,
        config.accounting,
    );
    let riskfree = data.riskfree.as_ref().map(|rf| {
        rf.values
            .slice(ndarray::s![start..start + config.rebalance_days])
            .iter()
            .map(|v| 1.0 + v)
            .product::<f64>()
            - 1.0
    });
    Ok(Outcome::Done {
        date,
        ret,
        riskfree,
        assets: names,
        weights: weights.weights,
        fallback,
    })
}

/// Runs the rolling evaluation. Periods are evaluated in parallel on the
/// current rayon pool; the result does not depend on the thread count.
pub fn run_backtest(config: &BacktestConfig, data: &MarketDataBundle) -> Result<BacktestResult> {
    config.validate()?;
    let t = data.returns.n_periods();
    let first = config.first_row();
    if config.strategy != Strategy::EqualWeight && config.estimation_window > first {
        return Err(Error::InvalidSpec(
            "estimation window exceeds the first period".into(),
        ));
    }
    if config.universe == UniverseRule::AllAssets
        && data.returns.n_assets() != config.portfolio_size
    {
        return Err(Error::InvalidSpec(format!(
            "all-assets universe holds {} assets but portfolio_size is {}",
            data.returns.n_assets(),
            config.portfolio_size
        )));
    }
    if config.universe == UniverseRule::Filter && data.caps.is_none() {
        return Err(Error::MissingCaps(
            "the universe filter ranks assets by market cap; supply caps.csv or use universe = \"all_assets\"".into(),
        ));
    }
    let available = t.saturating_sub(first) / config.rebalance_days;
    let periods = available.min(config.horizon_months);
    if periods == 0 {
        return Err(Error::InsufficientData {
            required: first + config.rebalance_days,
            actual: t,
        });
    }

    let outcomes: Vec<Outcome> = (0..periods)
        .into_par_iter()
        .map(|h| run_period(config, data, first + h * config.rebalance_days))
        .collect::<Result<_>>()?;

    let mut result = BacktestResult {
        config: config.clone(),
        periods_attempted: periods,
        period_dates: Vec::new(),
        monthly_returns: Vec::new(),
        riskfree_monthly: data.riskfree.as_ref().map(|_| Vec::new()),
        universe_history: Vec::new(),
        weights_history: Vec::new(),
        fallbacks: Vec::new(),
        failures: Vec::new(),
        metrics: None,
    };
    for (period, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Outcome::Done {
                date,
                ret,
                riskfree,
                assets,
                weights,
                fallback,
            } => {
                if let Some(message) = fallback {
                    result.fallbacks.push(PeriodNote {
                        period,
                        date: date.clone(),
                        message,
                    });
                }
                result.period_dates.push(date);
                result.monthly_returns.push(ret);
                if let (Some(v), Some(rf)) = (result.riskfree_monthly.as_mut(), riskfree) {
                    v.push(rf);
                }
                result.universe_history.push(assets);
                result.weights_history.push(weights);
            }
            Outcome::Skipped { date, message } => result.failures.push(PeriodNote {
                period,
                date,
                message,
            }),
        }
    }
    if result.monthly_returns.len() >= 2 {
        result.metrics = Some(result.recompute_metrics()?);
    }
    Ok(result)
}
