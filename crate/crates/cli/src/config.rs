//! TOML configuration files.
//!
//! A backtest config is a flat `BacktestConfig` with an `[estimator]` table:
//!
//! ```toml
//! portfolio_size = 20
//! estimation_window = 100
//! strategy = "gmv"
//!
//! [estimator]
//! method = "mtp2"
//! tol = 1e-7
//! ```
//!
//! A compare config lists the grid, the method labels, shared settings and
//! optional per-label estimator tables:
//!
//! ```toml
//! methods = ["ls", "mtp2", "poet3"]
//! grid = [{ portfolio_size = 20, estimation_window = 50 }]
//!
//! [settings]
//! strategy = "gmv"
//!
//! [estimators.poet3]
//! method = "poet"
//! k = 3
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use mtp2_core::backtest::BacktestConfig;
use mtp2_core::Error;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use toml::{Table, Value};

use crate::cli_error::CliError;

fn invalid(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Core(Error::InvalidSpec(format!("{}: {e}", path.display())))
}

pub fn read_toml<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| invalid(path, e))
}

pub fn load_backtest_config(path: &Path) -> Result<BacktestConfig, CliError> {
    let config: BacktestConfig = read_toml(path)?;
    config.validate()?;
    Ok(config)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridPoint {
    pub portfolio_size: usize,
    pub estimation_window: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    #[serde(default)]
    pub methods: Vec<String>,
    pub grid: Vec<GridPoint>,
    #[serde(default)]
    pub settings: Table,
    #[serde(default)]
    pub estimators: BTreeMap<String, Table>,
}

const GRID_KEYS: [&str; 3] = ["portfolio_size", "estimation_window", "estimator"];

impl CompareConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let config: Self = read_toml(path)?;
        if config.grid.is_empty() {
            return Err(invalid(path, "grid must list at least one point"));
        }
        if let Some(k) = GRID_KEYS.iter().find(|k| config.settings.contains_key(**k)) {
            return Err(invalid(
                path,
                format!("settings may not set '{k}'; it comes from the grid and methods"),
            ));
        }
        Ok(config)
    }

    /// The backtest configuration of one cell. A label names a table under
    /// `[estimators]`, or is itself a method name.
    pub fn cell(&self, point: GridPoint, label: &str) -> Result<BacktestConfig, CliError> {
        let mut estimator = self.estimators.get(label).cloned().unwrap_or_default();
        estimator
            .entry("method")
            .or_insert_with(|| Value::String(label.to_string()));
        let mut table = self.settings.clone();
        table.insert(
            "portfolio_size".into(),
            Value::Integer(point.portfolio_size as i64),
        );
        table.insert(
            "estimation_window".into(),
            Value::Integer(point.estimation_window as i64),
        );
        table.insert("estimator".into(), Value::Table(estimator));
        let config: BacktestConfig = Value::Table(table)
            .try_into()
            .map_err(|e| CliError::Core(Error::InvalidSpec(format!("method '{label}': {e}"))))?;
        config.validate()?;
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use mtp2_core::backtest::Strategy;
    use mtp2_core::estimators::EstimatorSpec;

    fn parse(text: &str) -> CompareConfig {
        toml::from_str(text).unwrap()
    }

    #[test]
    fn cells_merge_settings_and_estimator_tables() {
        let c = parse(
            r#"
            methods = ["ls", "poet3"]
            grid = [{ portfolio_size = 5, estimation_window = 30 }]
            [settings]
            strategy = "equal_weight"
            [estimators.poet3]
            method = "poet"
            k = 3
            "#,
        );
        let point = c.grid[0];
        let ls = c.cell(point, "ls").unwrap();
        assert_eq!(ls.estimator, EstimatorSpec::Ls { rho: None });
        assert_eq!(ls.strategy, Strategy::EqualWeight);
        assert_eq!(ls.portfolio_size, 5);
        let poet = c.cell(point, "poet3").unwrap();
        assert!(matches!(poet.estimator, EstimatorSpec::Poet { k: 3, .. }));
        assert!(c.cell(point, "nonsense").is_err());
    }

    #[test]
    fn backtest_config_from_toml() {
        let config: BacktestConfig = toml::from_str(
            r#"
            portfolio_size = 10
            estimation_window = 60
            [estimator]
            method = "glasso"
            lambda = 0.001
            "#,
        )
        .unwrap();
        assert_eq!(config.rebalance_days, 21);
        assert!(matches!(
            config.estimator,
            EstimatorSpec::Glasso {
                lambda: Some(_),
                ..
            }
        ));
        let bad: Result<BacktestConfig, _> = toml::from_str(
            "portfolio_size = 1\nestimation_window = 2\nsurprise = 1\n[estimator]\nmethod = \"ls\"\n",
        );
        assert!(bad.is_err());
    }
}
