use std::fs;

use mtp2_core::backtest::{run_backtest, RollingWindow};
use mtp2_core::io::load_bundle;
use mtp2_core::io::results::write_rolling_csv;

use crate::cli_error::CliError;
use crate::config::CompareConfig;
use crate::table::{CompareTable, TableRow};
use crate::CompareArgs;

pub fn run(a: CompareArgs) -> Result<(), CliError> {
    let config = CompareConfig::load(&a.config)?;
    let labels = a.methods.clone().unwrap_or_else(|| config.methods.clone());
    if labels.is_empty() {
        return Err(CliError::Usage(
            "no methods given (use --methods or `methods` in the config)".into(),
        ));
    }
    // Resolve every cell before running anything so that config errors fail fast.
    let mut cells = Vec::new();
    for point in &config.grid {
        for label in &labels {
            cells.push((*point, label.clone(), config.cell(*point, label)?));
        }
    }
    let (data, warnings) = load_bundle(&a.data)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let rolling_dir = a.out.join("rolling");
    fs::create_dir_all(&rolling_dir)?;

    let mut rows: Vec<TableRow> = Vec::new();
    for (point, label, bt) in cells {
        if rows
            .last()
            .is_none_or(|r| (r.n, r.t) != (point.portfolio_size, point.estimation_window))
        {
            rows.push(TableRow {
                n: point.portfolio_size,
                t: point.estimation_window,
                cells: vec![],
            });
        }
        let metrics = match run_backtest(&bt, &data) {
            Ok(result) => {
                if result.monthly_returns.len() >= mtp2_core::backtest::metrics::ROLLING_WINDOW {
                    for (window, suffix) in [
                        (RollingWindow::Cumulative, "cumulative"),
                        (RollingWindow::SixtyMonthWindows, "60m"),
                    ] {
                        let name = format!(
                            "{label}_N{}_T{}_{suffix}.csv",
                            point.portfolio_size, point.estimation_window
                        );
                        write_rolling_csv(&result.rolling(window)?, &rolling_dir.join(name))?;
                    }
                }
                if result.metrics.is_none() {
                    eprintln!(
                        "{label} at N={} T={}: fewer than two periods completed",
                        point.portfolio_size, point.estimation_window
                    );
                }
                result.metrics
            }
            Err(e) => {
                eprintln!(
                    "{label} at N={} T={} failed: {e}",
                    point.portfolio_size, point.estimation_window
                );
                None
            }
        };
        rows.last_mut()
            .expect("row pushed above")
            .cells
            .push(metrics);
    }

    let table = CompareTable { labels, rows };
    let mut w = csv::Writer::from_path(a.out.join("compare.csv")).map_err(csv_error)?;
    for rec in table.csv_records() {
        w.write_record(&rec).map_err(csv_error)?;
    }
    w.flush()?;
    let text = table.to_text();
    fs::write(a.out.join("compare.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn csv_error(e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => io.into(),
        other => CliError::Core(mtp2_core::Error::InvalidInput(format!("{other:?}"))),
    }
}
