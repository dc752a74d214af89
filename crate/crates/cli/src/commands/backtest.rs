use mtp2_core::backtest::{run_backtest, BacktestResult};
use mtp2_core::io::{load_bundle, save_backtest};

use crate::cli_error::CliError;
use crate::config::load_backtest_config;
use crate::table::MetricKind;
use crate::BacktestArgs;

/// `method  N  T | std×100  sharpe  IR`, formatted like one row of a results table.
pub fn summary_line(result: &BacktestResult) -> String {
    let c = &result.config;
    let m = result.metrics.as_ref();
    let cells: Vec<String> = MetricKind::ALL
        .iter()
        .map(|k| {
            let v = k.value(m);
            if v.is_nan() {
                "nan".to_string()
            } else {
                format!("{v:.3}")
            }
        })
        .collect();
    format!(
        "{}  N={}  T={} | std×100 {}  sharpe {}  IR {}",
        c.estimator.id(),
        c.portfolio_size,
        c.estimation_window,
        cells[0],
        cells[1],
        cells[2]
    )
}

pub fn run(a: BacktestArgs) -> Result<(), CliError> {
    let config = load_backtest_config(&a.config)?;
    let (data, warnings) = load_bundle(&a.data)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let result = run_backtest(&config, &data)?;
    for note in &result.failures {
        eprintln!(
            "skipped period {} ({}): {}",
            note.period, note.date, note.message
        );
    }
    for note in &result.fallbacks {
        eprintln!(
            "fallback in period {} ({}): {}",
            note.period, note.date, note.message
        );
    }
    let written = save_backtest(&result, &a.out)?;
    println!(
        "{} of {} periods completed",
        result.monthly_returns.len(),
        result.periods_attempted
    );
    println!("{}", summary_line(&result));
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(())
}
