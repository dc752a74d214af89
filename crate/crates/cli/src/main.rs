//! `mtp2`: estimate covariances, verify fits, run backtests, build comparison
//! tables and generate synthetic data.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

mod cli_error;
mod commands;
mod config;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cli_error::CliError;

#[derive(Debug, Parser)]
#[command(name = "mtp2", version, about, propagate_version = true)]
struct Cli {
    /// Worker threads for parallel work inside backtests (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate a covariance matrix from a returns panel.
    Estimate(EstimateArgs),
    /// Check a stored fit or matrix, or reproduce the bivariate t counterexample.
    Verify(VerifyArgs),
    /// Run a rolling out-of-sample backtest.
    Backtest(BacktestArgs),
    /// Backtest several methods over a grid of (N, T) and tabulate the metrics.
    Compare(CompareArgs),
    /// Generate a synthetic data bundle with its ground truth.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Auto,
    Long,
    Wide,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    /// Returns panel CSV (long: date,asset_id,return; wide: date,<asset>,...).
    #[arg(long, value_name = "PATH")]
    input: PathBuf,
    /// Layout of the input file.
    #[arg(long, value_enum, default_value = "auto")]
    format: FormatArg,
    /// Estimator: mtp2, mtp2-kt, sample, ls, efm, afm-ls, poet or glasso.
    #[arg(long)]
    method: String,
    /// Shrinkage intensity in [0, 1] (ls; default: Ledoit-Wolf optimum).
    #[arg(long)]
    rho: Option<f64>,
    /// Number of principal components (poet).
    #[arg(long)]
    k: Option<usize>,
    /// Threshold constant (poet; default: smallest value giving a PD matrix).
    #[arg(long)]
    c: Option<f64>,
    /// Threshold residual correlations instead of covariances (poet).
    #[arg(long)]
    correlation_scale: bool,
    /// Penalty (glasso; default: chosen by cross-validation).
    #[arg(long)]
    lambda: Option<f64>,
    /// Convergence tolerance (mtp2, mtp2-kt, glasso).
    #[arg(long)]
    tol: Option<f64>,
    /// Iteration limit (mtp2, mtp2-kt, glasso).
    #[arg(long, value_name = "N")]
    max_iter: Option<usize>,
    /// Factor returns CSV, date column then one column per factor (efm, afm-ls).
    #[arg(long, value_name = "PATH")]
    factors: Option<PathBuf>,
    /// Output JSON document.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    /// Also write the estimated matrix as a labelled CSV.
    #[arg(long, value_name = "PATH")]
    matrix_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("target").required(true).args(["paper_example", "fit", "matrix"]))]
struct VerifyArgs {
    /// Evaluate the bivariate t (df = 1) pair that violates the MTP2 inequality.
    #[arg(long)]
    paper_example: bool,
    /// A fit document written by `estimate`.
    #[arg(long, value_name = "PATH")]
    fit: Option<PathBuf>,
    /// A labelled matrix CSV or a covariance_estimate JSON document.
    #[arg(long, value_name = "PATH")]
    matrix: Option<PathBuf>,
    /// Treat --matrix as a precision matrix instead of a covariance matrix.
    #[arg(long, requires = "matrix")]
    precision: bool,
    /// Tolerance for the KKT checks and, with --matrix, for off-diagonal
    /// precision entries after scaling to unit diagonal.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
}

#[derive(Debug, Args)]
struct BacktestArgs {
    /// TOML configuration (see README for the schema).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Bundle directory with returns.csv and optional caps.csv, factors.csv, riskfree.csv.
    #[arg(long, value_name = "DIR")]
    data: PathBuf,
    /// Output JSON document; companion CSVs are written next to it.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CompareArgs {
    /// TOML configuration with a `grid` of (N, T) points and shared settings.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Bundle directory.
    #[arg(long, value_name = "DIR")]
    data: PathBuf,
    /// Comma-separated method labels; overrides `methods` in the config.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// Output directory for compare.csv, compare.txt and rolling/*.csv.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// TOML synthetic spec; inline flags override its values.
    #[arg(long, value_name = "PATH")]
    spec: Option<PathBuf>,
    /// gaussian_mtp2, single_factor or elliptical_t_inverse_m.
    #[arg(long)]
    generator: Option<String>,
    /// Number of assets.
    #[arg(long)]
    n: Option<usize>,
    /// Number of days.
    #[arg(long)]
    t: Option<usize>,
    /// Random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Probability of a nonzero off-diagonal precision entry.
    #[arg(long)]
    edge_prob: Option<f64>,
    /// Smallest market loading (single_factor).
    #[arg(long)]
    beta_min: Option<f64>,
    /// Largest market loading (single_factor).
    #[arg(long)]
    beta_max: Option<f64>,
    /// Degrees of freedom (elliptical_t_inverse_m).
    #[arg(long)]
    df: Option<f64>,
    /// Daily volatility unit.
    #[arg(long)]
    scale: Option<f64>,
    /// Diagonal rule for the M-matrix precision: spectral_shift or row_sum.
    #[arg(long)]
    diagonal: Option<String>,
    /// Output directory for the bundle and truth files.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot configure threads: {e}")))?;
    }
    match cli.command {
        Command::Estimate(a) => commands::estimate::run(a),
        Command::Verify(a) => commands::verify::run(a),
        Command::Backtest(a) => commands::backtest::run(a),
        Command::Compare(a) => commands::compare::run(a),
        Command::Synth(a) => commands::synth::run(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                CliError::Core(core) => eprintln!("error [{}]: {e}", core.code()),
                _ => eprintln!("error: {e}"),
            }
            ExitCode::from(e.exit_code())
        }
    }
}
