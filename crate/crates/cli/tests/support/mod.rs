#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

pub fn mtp2_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mtp2"))
}

/// Runs the binary with `args` and returns its output.
pub fn run<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    mtp2_bin().args(args).output().expect("binary runs")
}

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

/// Monthly returns plus headline metrics of a backtest, flattened to numbers.
#[derive(Debug)]
pub struct GoldenMetrics {
    values: Vec<(String, f64)>,
}

impl GoldenMetrics {
    fn from_body(body: &Value) -> Self {
        let metrics = &body["metrics"];
        let mut values = vec![
            (
                "monthly_std".to_string(),
                metrics["monthly_std"].as_f64().unwrap(),
            ),
            (
                "annualized_std".to_string(),
                metrics["annualized_std"].as_f64().unwrap(),
            ),
            (
                "sharpe".to_string(),
                metrics["sharpe"]["annualized"].as_f64().unwrap(),
            ),
            (
                "information_ratio".to_string(),
                metrics["information_ratio"]["annualized"].as_f64().unwrap(),
            ),
        ];
        for (i, r) in body["monthly_returns"]
            .as_array()
            .unwrap()
            .iter()
            .enumerate()
        {
            values.push((format!("month {i}"), r.as_f64().unwrap()));
        }
        Self { values }
    }

    /// The checked-in values for the GMV fixture run.
    pub fn load() -> Self {
        let text = std::fs::read_to_string(fixture("golden/gmv_metrics.json")).unwrap();
        Self::from_body(&serde_json::from_str(&text).unwrap())
    }

    /// Values from a `backtest_result` document written by the binary.
    pub fn from_result(path: &Path) -> Self {
        let doc: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
        Self::from_body(&doc["body"])
    }

    /// Largest absolute difference; infinite if the shapes differ.
    pub fn max_gap(&self, other: &Self) -> f64 {
        if self.values.len() != other.values.len() {
            return f64::INFINITY;
        }
        self.values
            .iter()
            .zip(&other.values)
            .map(|((_, a), (_, b))| (a - b).abs())
            .fold(0.0, f64::max)
    }
}
