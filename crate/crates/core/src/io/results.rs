//! Versioned JSON documents and CSV companions for estimates, solver fits
//! and backtest results.
//!
//! A document is `{"schema_version": 1, "kind": "...", "body": {...}}`.
//! Matrices inside a body are `{"v": 1, "dim": [rows, cols], "data": [...]}`
//! with `data` in row-major order. Non-finite metric values are written as the
//! strings `"nan"`, `"inf"` and `"-inf"`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::synth::SyntheticTruth;
use super::tables::csv_io;
use crate::backtest::metrics::ROLLING_WINDOW;
use crate::backtest::{BacktestResult, RollingPoint, RollingWindow};
use crate::error::{Error, Result};
use crate::estimators::CovarianceEstimate;
use crate::linalg::SymMatrix;
use crate::mtp2::MtpSolution;
use crate::panel::default_assets;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SaveFormat {
    #[default]
    Json,
    Csv,
}

/// A type that can be stored as a result document.
pub trait ResultDocument: Serialize + DeserializeOwned {
    /// Value of the `kind` field.
    const KIND: &'static str;

    /// Writes the tabular part of the value as CSV.
    fn write_csv(&self, path: &Path) -> Result<()>;
}

/// Output of `estimate`: the estimate, the solver fit for MTP2 methods, and
/// the matrix the solver saw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub estimate: CovarianceEstimate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solution: Option<MtpSolution>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<SymMatrix>,
}

impl ResultDocument for CovarianceEstimate {
    const KIND: &'static str = "covariance_estimate";

    fn write_csv(&self, path: &Path) -> Result<()> {
        write_matrix_csv(path, &self.assets, self.matrix.as_array())
    }
}

impl ResultDocument for MtpSolution {
    const KIND: &'static str = "mtp_solution";

    fn write_csv(&self, path: &Path) -> Result<()> {
        write_matrix_csv(
            path,
            &default_assets(self.sigma_hat.dim()),
            self.sigma_hat.as_array(),
        )
    }
}

impl ResultDocument for FitRecord {
    const KIND: &'static str = "fit";

    fn write_csv(&self, path: &Path) -> Result<()> {
        self.estimate.write_csv(path)
    }
}

impl ResultDocument for BacktestResult {
    const KIND: &'static str = "backtest_result";

    fn write_csv(&self, path: &Path) -> Result<()> {
        write_monthly_csv(self, path)
    }
}

impl ResultDocument for SyntheticTruth {
    const KIND: &'static str = "synthetic_truth";

    fn write_csv(&self, path: &Path) -> Result<()> {
        write_matrix_csv(
            path,
            &default_assets(self.sigma.dim()),
            self.sigma.as_array(),
        )
    }
}

#[derive(Serialize)]
struct EnvelopeOut<'a, T> {
    schema_version: u32,
    kind: &'static str,
    body: &'a T,
}

#[derive(Deserialize)]
struct EnvelopeIn<T> {
    schema_version: u32,
    kind: String,
    body: T,
}

/// Header of a document, read without decoding the body.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct DocumentHeader {
    pub schema_version: u32,
    pub kind: String,
}

pub fn save_json<T: ResultDocument>(value: &T, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(super::create_file(path)?);
    serde_json::to_writer_pretty(
        &mut w,
        &EnvelopeOut {
            schema_version: SCHEMA_VERSION,
            kind: T::KIND,
            body: value,
        },
    )?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn save_result<T: ResultDocument>(value: &T, path: &Path, format: SaveFormat) -> Result<()> {
    match format {
        SaveFormat::Json => save_json(value, path),
        SaveFormat::Csv => value.write_csv(path),
    }
}

fn json_error(path: &Path, e: serde_json::Error) -> Error {
    if e.is_io() {
        return Error::Json(e);
    }
    Error::Parse {
        path: path.display().to_string(),
        line: e.line(),
        message: e.to_string(),
    }
}

pub fn read_header(path: &Path) -> Result<DocumentHeader> {
    let reader = BufReader::new(File::open(path)?);
    serde_json::from_reader(reader).map_err(|e| json_error(path, e))
}

/// Loads a document, checking its version and kind.
pub fn load_json<T: ResultDocument>(path: &Path) -> Result<T> {
    let header = read_header(path)?;
    if header.schema_version != SCHEMA_VERSION {
        return Err(Error::InvalidInput(format!(
            "{}: schema_version {} is not supported (expected {SCHEMA_VERSION})",
            path.display(),
            header.schema_version
        )));
    }
    if header.kind != T::KIND {
        return Err(Error::InvalidInput(format!(
            "{}: document kind is '{}', expected '{}'",
            path.display(),
            header.kind,
            T::KIND
        )));
    }
    let reader = BufReader::new(File::open(path)?);
    let doc: EnvelopeIn<T> = serde_json::from_reader(reader).map_err(|e| json_error(path, e))?;
    debug_assert_eq!(doc.schema_version, SCHEMA_VERSION);
    debug_assert_eq!(doc.kind, T::KIND);
    Ok(doc.body)
}

/// Formats a float for CSV output: shortest round-trip form, or `nan`/`inf`/`-inf`.
pub fn fmt_float(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v}")
    }
}

fn parse_float(text: &str) -> Option<f64> {
    match text {
        "nan" => Some(f64::NAN),
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        t => t.parse().ok(),
    }
}

/// Square labelled matrix: header `,id1,id2,…`, then one row per id.
pub fn write_matrix_csv(path: &Path, labels: &[String], m: &Array2<f64>) -> Result<()> {
    if m.dim() != (labels.len(), labels.len()) {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            actual: m.nrows(),
        });
    }
    let mut w = csv::Writer::from_writer(super::create_file(path)?);
    let mut header = vec![String::new()];
    header.extend(labels.iter().cloned());
    w.write_record(&header).map_err(csv_io)?;
    for (i, label) in labels.iter().enumerate() {
        let mut row = vec![label.clone()];
        row.extend(m.row(i).iter().map(|v| fmt_float(*v)));
        w.write_record(&row).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a matrix written by [`write_matrix_csv`].
pub fn read_matrix_csv(path: &Path) -> Result<(Vec<String>, Array2<f64>)> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.display().to_string(),
        line,
        message,
    };
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_io)?;
    let labels: Vec<String> = r
        .headers()
        .map_err(csv_io)?
        .iter()
        .skip(1)
        .map(str::to_string)
        .collect();
    let n = labels.len();
    if n == 0 {
        return Err(parse_err(1, "matrix header has no column labels".into()));
    }
    let mut m = Array2::<f64>::zeros((n, n));
    let mut rows = 0;
    for record in r.records() {
        let record = record
            .map_err(|e| parse_err(e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if rows == n {
            return Err(parse_err(line, format!("more than {n} rows")));
        }
        if record.get(0) != Some(labels[rows].as_str()) {
            return Err(parse_err(
                line,
                format!("row label should be '{}'", labels[rows]),
            ));
        }
        for (j, text) in record.iter().skip(1).enumerate() {
            m[[rows, j]] = parse_float(text)
                .ok_or_else(|| parse_err(line, format!("'{text}' is not a number")))?;
        }
        rows += 1;
    }
    if rows != n {
        return Err(parse_err(
            rows + 1,
            format!("expected {n} rows, found {rows}"),
        ));
    }
    Ok((labels, m))
}

/// `period,date,return[,riskfree]`, one row per completed period.
pub fn write_monthly_csv(result: &BacktestResult, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(super::create_file(path)?);
    let rf = result.riskfree_monthly.as_deref();
    let mut header = vec!["period", "date", "return"];
    if rf.is_some() {
        header.push("riskfree");
    }
    w.write_record(&header).map_err(csv_io)?;
    for (h, (date, r)) in result
        .period_dates
        .iter()
        .zip(&result.monthly_returns)
        .enumerate()
    {
        let mut row = vec![(h + 1).to_string(), date.clone(), fmt_float(*r)];
        if let Some(rf) = rf {
            row.push(fmt_float(rf[h]));
        }
        w.write_record(&row).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

/// Long format `period,date,asset,weight`.
pub fn write_weights_csv(result: &BacktestResult, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(super::create_file(path)?);
    w.write_record(["period", "date", "asset", "weight"])
        .map_err(csv_io)?;
    let rows = result
        .period_dates
        .iter()
        .zip(&result.universe_history)
        .zip(&result.weights_history)
        .enumerate();
    for (h, ((date, assets), weights)) in rows {
        for (a, x) in assets.iter().zip(weights) {
            w.write_record([(h + 1).to_string(), date.clone(), a.clone(), fmt_float(*x)])
                .map_err(csv_io)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `horizon,annualized_std,sharpe,information_ratio` with annualized ratios;
/// `sharpe` is empty when no risk-free series was used.
pub fn write_rolling_csv(points: &[RollingPoint], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(super::create_file(path)?);
    w.write_record(["horizon", "annualized_std", "sharpe", "information_ratio"])
        .map_err(csv_io)?;
    for p in points {
        w.write_record([
            p.horizon.to_string(),
            fmt_float(p.metrics.annualized_std),
            p.metrics
                .sharpe
                .map_or(String::new(), |s| fmt_float(s.annualized)),
            fmt_float(p.metrics.information_ratio.annualized),
        ])
        .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map_or_else(|| "result".into(), |s| s.to_string_lossy().into_owned());
    path.with_file_name(format!("{stem}_{suffix}.csv"))
}

/// Writes the JSON document at `path` plus `<stem>_monthly.csv`,
/// `<stem>_weights.csv` and, with at least 60 months,
/// `<stem>_rolling_cumulative.csv` and `<stem>_rolling_60m.csv`.
/// Returns every path written.
pub fn save_backtest(result: &BacktestResult, path: &Path) -> Result<Vec<PathBuf>> {
    save_json(result, path)?;
    let mut written = vec![path.to_path_buf()];
    let monthly = sibling(path, "monthly");
    write_monthly_csv(result, &monthly)?;
    written.push(monthly);
    let weights = sibling(path, "weights");
    write_weights_csv(result, &weights)?;
    written.push(weights);
    if result.monthly_returns.len() >= ROLLING_WINDOW {
        for (window, suffix) in [
            (RollingWindow::Cumulative, "rolling_cumulative"),
            (RollingWindow::SixtyMonthWindows, "rolling_60m"),
        ] {
            let p = sibling(path, suffix);
            write_rolling_csv(&result.rolling(window)?, &p)?;
            written.push(p);
        }
    }
    Ok(written)
}
