//! CSV readers and writers for panels, caps, factors and rate series.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{DatedSeries, FactorPanel, MarketCaps, MarketDataBundle, ReturnsPanel};

/// Environment variable naming the default data directory.
pub const DATA_DIR_ENV: &str = "MTP2_DATA_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PanelFormat {
    /// Long format if the header is `date,asset_id,return`, wide otherwise.
    #[default]
    Auto,
    /// `date,asset_id,return`, one observation per row.
    Long,
    /// `date,<asset>,<asset>,…`, one date per row.
    Wide,
}

/// Non-fatal findings while loading.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LoadWarning {
    /// Rows were not in ascending date order and have been sorted.
    UnsortedDatesRepaired { path: String },
}

impl std::fmt::Display for LoadWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LoadWarning::UnsortedDatesRepaired { path } => {
                write!(f, "{path}: dates were not ascending and have been sorted")
            }
        }
    }
}

/// Resolves a relative path against `MTP2_DATA_DIR` when it does not exist as given.
pub fn resolve_data_path(path: &Path) -> PathBuf {
    if path.is_relative() && !path.exists() {
        if let Some(root) = std::env::var_os(DATA_DIR_ENV) {
            let candidate = Path::new(&root).join(path);
            if candidate.exists() {
                return candidate;
            }
        }
    }
    path.to_path_buf()
}

fn display(path: &Path) -> String {
    path.display().to_string()
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: display(path),
        line,
        message: message.into(),
    }
}

struct Table {
    header: Vec<String>,
    /// `(line, fields)`.
    rows: Vec<(usize, Vec<String>)>,
}

fn read_table(path: &Path) -> Result<Table> {
    let file = File::open(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let map_csv = |e: csv::Error| {
        let line = e.position().map_or(0, |p| p.line() as usize);
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            kind => parse_error(path, line, format!("{kind:?}")),
        }
    };
    let header: Vec<String> = reader
        .headers()
        .map_err(map_csv)?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() || header.iter().all(|h| h.is_empty()) {
        return Err(parse_error(path, 1, "missing header row"));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(map_csv)?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        rows.push((line, record.iter().map(str::to_string).collect()));
    }
    Ok(Table { header, rows })
}

/// Parses a dot-decimal number; empty cells and `NA`/`NaN` are missing.
fn parse_cell(path: &Path, line: usize, text: &str) -> Result<Option<f64>> {
    if text.is_empty() || text.eq_ignore_ascii_case("na") || text.eq_ignore_ascii_case("nan") {
        return Ok(None);
    }
    match text.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(parse_error(
            path,
            line,
            format!("'{text}' is not a finite number"),
        )),
    }
}

fn check_unique_ids(path: &Path, ids: &[String]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for id in ids {
        if id.is_empty() {
            return Err(parse_error(path, 1, "empty column name"));
        }
        if !seen.insert(id) {
            return Err(parse_error(path, 1, format!("column '{id}' appears twice")));
        }
    }
    Ok(())
}

/// A date-indexed numeric table with an optional-value cell grid.
struct Grid {
    dates: Vec<String>,
    columns: Vec<String>,
    cells: Vec<Vec<Option<f64>>>,
    warnings: Vec<LoadWarning>,
}

fn finish_grid(
    path: &Path,
    mut by_date: Vec<(String, Vec<Option<f64>>)>,
    columns: Vec<String>,
) -> Result<Grid> {
    let mut warnings = Vec::new();
    if by_date.windows(2).any(|w| w[0].0 > w[1].0) {
        by_date.sort_by(|a, b| a.0.cmp(&b.0));
        warnings.push(LoadWarning::UnsortedDatesRepaired {
            path: display(path),
        });
    }
    if by_date.is_empty() {
        return Err(Error::EmptyPanel);
    }
    let (dates, cells) = by_date.into_iter().unzip();
    Ok(Grid {
        dates,
        columns,
        cells,
        warnings,
    })
}

fn wide_grid(path: &Path, table: Table) -> Result<Grid> {
    let columns = table.header[1..].to_vec();
    check_unique_ids(path, &columns)?;
    // Sort columns by id.
    let mut order: Vec<usize> = (0..columns.len()).collect();
    order.sort_by(|&a, &b| columns[a].cmp(&columns[b]));
    let sorted: Vec<String> = order.iter().map(|&i| columns[i].clone()).collect();

    let mut seen = BTreeSet::new();
    let mut by_date = Vec::with_capacity(table.rows.len());
    for (line, fields) in table.rows {
        let date = fields[0].clone();
        if date.is_empty() {
            return Err(parse_error(path, line, "empty date"));
        }
        if !seen.insert(date.clone()) {
            return Err(Error::DuplicateCell {
                date,
                asset: "*".into(),
            });
        }
        let mut values = Vec::with_capacity(order.len());
        for &i in &order {
            values.push(parse_cell(path, line, &fields[i + 1])?);
        }
        by_date.push((date, values));
    }
    finish_grid(path, by_date, sorted)
}

fn long_grid(path: &Path, table: Table) -> Result<Grid> {
    let mut cells: BTreeMap<String, BTreeMap<String, Option<f64>>> = BTreeMap::new();
    let mut assets = BTreeSet::new();
    let mut first_order = Vec::new();
    for (line, fields) in table.rows {
        let (date, asset) = (fields[0].clone(), fields[1].clone());
        if date.is_empty() || asset.is_empty() {
            return Err(parse_error(path, line, "empty date or asset id"));
        }
        let value = parse_cell(path, line, &fields[2])?;
        let row = cells.entry(date.clone()).or_insert_with(|| {
            first_order.push(date.clone());
            BTreeMap::new()
        });
        if row.insert(asset.clone(), value).is_some() {
            return Err(Error::DuplicateCell { date, asset });
        }
        assets.insert(asset);
    }
    let columns: Vec<String> = assets.into_iter().collect();
    let mut warnings = Vec::new();
    if first_order.windows(2).any(|w| w[0] > w[1]) {
        warnings.push(LoadWarning::UnsortedDatesRepaired {
            path: display(path),
        });
    }
    if cells.is_empty() {
        return Err(Error::EmptyPanel);
    }
    let (dates, cells) = cells
        .into_iter()
        .map(|(d, row)| {
            let values = columns
                .iter()
                .map(|a| row.get(a).copied().flatten())
                .collect();
            (d, values)
        })
        .unzip();
    Ok(Grid {
        dates,
        columns,
        cells,
        warnings,
    })
}

fn is_long_header(header: &[String]) -> bool {
    header.len() == 3
        && header[0].eq_ignore_ascii_case("date")
        && header[1].eq_ignore_ascii_case("asset_id")
        && header[2].eq_ignore_ascii_case("return")
}

fn load_grid(path: &Path, format: PanelFormat) -> Result<Grid> {
    let table = read_table(path)?;
    let long = match format {
        PanelFormat::Long => {
            if !is_long_header(&table.header) {
                return Err(parse_error(path, 1, "expected header date,asset_id,return"));
            }
            true
        }
        PanelFormat::Wide => false,
        PanelFormat::Auto => is_long_header(&table.header),
    };
    if long {
        long_grid(path, table)
    } else {
        if table.header.len() < 2 {
            return Err(parse_error(
                path,
                1,
                "expected a date column and at least one value column",
            ));
        }
        wide_grid(path, table)
    }
}

/// Loads a returns panel. Dates come back ascending and assets sorted by id;
/// absent cells are masked.
pub fn load_returns(path: &Path, format: PanelFormat) -> Result<(ReturnsPanel, Vec<LoadWarning>)> {
    let grid = load_grid(path, format)?;
    let (t, n) = (grid.dates.len(), grid.columns.len());
    let mut values = Array2::<f64>::zeros((t, n));
    let mut mask = Array2::from_elem((t, n), true);
    for (r, row) in grid.cells.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            match v {
                Some(x) => values[[r, c]] = *x,
                None => mask[[r, c]] = false,
            }
        }
    }
    let panel = ReturnsPanel::with_mask(grid.dates, grid.columns, values, Some(mask))?;
    Ok((panel, grid.warnings))
}

fn fmt_cell(v: f64, observed: bool) -> String {
    if observed {
        // `Display` prints the shortest representation that parses back to the same bits.
        format!("{v}")
    } else {
        String::new()
    }
}

/// Writes a wide CSV; masked cells are left empty.
pub fn save_panel(panel: &ReturnsPanel, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(super::create_file(path)?);
    let mut header = vec!["date".to_string()];
    header.extend(panel.assets.iter().cloned());
    w.write_record(&header).map_err(csv_io)?;
    for (t, date) in panel.dates.iter().enumerate() {
        let mut row = vec![date.clone()];
        row.extend(
            (0..panel.n_assets()).map(|i| fmt_cell(panel.returns[[t, i]], panel.is_observed(t, i))),
        );
        w.write_record(&row).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn csv_io(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidInput(format!("{other:?}")),
    }
}

fn write_wide(
    path: &Path,
    dates: &[String],
    columns: &[String],
    values: &Array2<f64>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(super::create_file(path)?);
    let mut header = vec!["date".to_string()];
    header.extend(columns.iter().cloned());
    w.write_record(&header).map_err(csv_io)?;
    for (t, date) in dates.iter().enumerate() {
        let mut row = vec![date.clone()];
        row.extend(values.row(t).iter().map(|v| fmt_cell(*v, v.is_finite())));
        w.write_record(&row).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

/// Loads wide-format caps and reindexes them onto the panel's axes; cells
/// with no matching row or column are `NaN`.
pub fn load_caps(path: &Path, panel: &ReturnsPanel) -> Result<(MarketCaps, Vec<LoadWarning>)> {
    let grid = load_grid(path, PanelFormat::Wide)?;
    let col: BTreeMap<&str, usize> = grid
        .columns
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();
    let row: BTreeMap<&str, usize> = grid
        .dates
        .iter()
        .enumerate()
        .map(|(i, d)| (d.as_str(), i))
        .collect();
    let values = Array2::from_shape_fn(panel.returns.dim(), |(t, i)| {
        match (
            row.get(panel.dates[t].as_str()),
            col.get(panel.assets[i].as_str()),
        ) {
            (Some(&r), Some(&c)) => grid.cells[r][c].unwrap_or(f64::NAN),
            _ => f64::NAN,
        }
    });
    Ok((
        MarketCaps {
            dates: panel.dates.clone(),
            assets: panel.assets.clone(),
            values,
        },
        grid.warnings,
    ))
}

pub fn save_caps(caps: &MarketCaps, path: &Path) -> Result<()> {
    write_wide(path, &caps.dates, &caps.assets, &caps.values)
}

/// Loads wide-format factor returns; every cell must be present. Columns keep file order.
pub fn load_factors(path: &Path) -> Result<(FactorPanel, Vec<LoadWarning>)> {
    let table = read_table(path)?;
    if table.header.len() < 2 {
        return Err(parse_error(
            path,
            1,
            "expected a date column and at least one factor",
        ));
    }
    let ids = table.header[1..].to_vec();
    check_unique_ids(path, &ids)?;
    let mut by_date = Vec::new();
    for (line, fields) in &table.rows {
        let mut values = Vec::with_capacity(ids.len());
        for text in &fields[1..] {
            match parse_cell(path, *line, text)? {
                Some(v) => values.push(Some(v)),
                None => return Err(parse_error(path, *line, "factor values cannot be missing")),
            }
        }
        by_date.push((fields[0].clone(), values));
    }
    let mut seen = BTreeSet::new();
    for (d, _) in &by_date {
        if !seen.insert(d.clone()) {
            return Err(Error::DuplicateCell {
                date: d.clone(),
                asset: "*".into(),
            });
        }
    }
    let grid = finish_grid(path, by_date, ids)?;
    let values = Array2::from_shape_fn((grid.dates.len(), grid.columns.len()), |(r, c)| {
        grid.cells[r][c].unwrap_or(f64::NAN)
    });
    Ok((
        FactorPanel::new(grid.dates, grid.columns, values)?,
        grid.warnings,
    ))
}

pub fn save_factors(factors: &FactorPanel, path: &Path) -> Result<()> {
    write_wide(path, &factors.dates, &factors.factor_ids, &factors.factors)
}

/// Loads `date,rate` and aligns it to `dates`; every date must be present.
pub fn load_riskfree(path: &Path, dates: &[String]) -> Result<(DatedSeries, Vec<LoadWarning>)> {
    let grid = load_grid(path, PanelFormat::Wide)?;
    if grid.columns.len() != 1 {
        return Err(parse_error(
            path,
            1,
            "expected exactly two columns: date,rate",
        ));
    }
    let lookup: BTreeMap<&str, Option<f64>> = grid
        .dates
        .iter()
        .map(String::as_str)
        .zip(grid.cells.iter().map(|c| c[0]))
        .collect();
    let mut values = Vec::with_capacity(dates.len());
    for d in dates {
        match lookup.get(d.as_str()) {
            Some(Some(v)) => values.push(*v),
            _ => {
                return Err(Error::InvalidInput(format!(
                    "{}: no risk-free rate for date {d}",
                    display(path)
                )))
            }
        }
    }
    Ok((
        DatedSeries {
            dates: dates.to_vec(),
            values: Array1::from(values),
        },
        grid.warnings,
    ))
}

pub fn save_riskfree(series: &DatedSeries, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(super::create_file(path)?);
    w.write_record(["date", "rate"]).map_err(csv_io)?;
    for (d, v) in series.dates.iter().zip(series.values.iter()) {
        w.write_record([d.clone(), format!("{v}")])
            .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

pub const RETURNS_FILE: &str = "returns.csv";
pub const CAPS_FILE: &str = "caps.csv";
pub const FACTORS_FILE: &str = "factors.csv";
pub const RISKFREE_FILE: &str = "riskfree.csv";

/// Loads a bundle directory: `returns.csv` plus optional `caps.csv`,
/// `factors.csv` and `riskfree.csv`.
pub fn load_bundle(dir: &Path) -> Result<(MarketDataBundle, Vec<LoadWarning>)> {
    let dir = resolve_data_path(dir);
    if !dir.is_dir() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("data directory {} not found", dir.display()),
        )));
    }
    let (returns, mut warnings) = load_returns(&dir.join(RETURNS_FILE), PanelFormat::Auto)?;
    let caps = match dir.join(CAPS_FILE) {
        p if p.exists() => {
            let (c, w) = load_caps(&p, &returns)?;
            warnings.extend(w);
            Some(c)
        }
        _ => None,
    };
    let factors = match dir.join(FACTORS_FILE) {
        p if p.exists() => {
            let (f, w) = load_factors(&p)?;
            warnings.extend(w);
            Some(f)
        }
        _ => None,
    };
    let riskfree = match dir.join(RISKFREE_FILE) {
        p if p.exists() => {
            let (r, w) = load_riskfree(&p, &returns.dates)?;
            warnings.extend(w);
            Some(r)
        }
        _ => None,
    };
    Ok((
        MarketDataBundle::new(returns, caps, factors, riskfree)?,
        warnings,
    ))
}

/// Writes the bundle's components into `dir`, creating it if needed.
pub fn save_bundle(bundle: &MarketDataBundle, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    save_panel(&bundle.returns, &dir.join(RETURNS_FILE))?;
    if let Some(c) = &bundle.caps {
        save_caps(c, &dir.join(CAPS_FILE))?;
    }
    if let Some(f) = &bundle.factors {
        save_factors(f, &dir.join(FACTORS_FILE))?;
    }
    if let Some(r) = &bundle.riskfree {
        save_riskfree(r, &dir.join(RISKFREE_FILE))?;
    }
    Ok(())
}
