use mtp2_core::estimators::EstimatorSpec;
use mtp2_core::io::{
    load_factors, load_returns, resolve_data_path, save_json, write_matrix_csv, FitRecord,
    PanelFormat,
};

use crate::cli_error::CliError;
use crate::{EstimateArgs, FormatArg};

/// Builds the estimator from `--method` and its flags, rejecting flags the
/// method does not take.
fn spec_from_args(a: &EstimateArgs) -> Result<EstimatorSpec, CliError> {
    let mut spec = EstimatorSpec::from_name(&a.method)?;
    let mut unused: Vec<&str> = Vec::new();
    let mut check = |present: bool, flag: &'static str, used: bool| {
        if present && !used {
            unused.push(flag);
        }
    };
    let iterative = matches!(
        spec,
        EstimatorSpec::Mtp2 { .. } | EstimatorSpec::Mtp2Kt { .. } | EstimatorSpec::Glasso { .. }
    );
    check(
        a.rho.is_some(),
        "--rho",
        matches!(spec, EstimatorSpec::Ls { .. }),
    );
    check(
        a.k.is_some(),
        "--k",
        matches!(spec, EstimatorSpec::Poet { .. }),
    );
    check(
        a.c.is_some(),
        "--c",
        matches!(spec, EstimatorSpec::Poet { .. }),
    );
    check(
        a.correlation_scale,
        "--correlation-scale",
        matches!(spec, EstimatorSpec::Poet { .. }),
    );
    check(
        a.lambda.is_some(),
        "--lambda",
        matches!(spec, EstimatorSpec::Glasso { .. }),
    );
    check(a.tol.is_some(), "--tol", iterative);
    check(a.max_iter.is_some(), "--max-iter", iterative);
    check(a.factors.is_some(), "--factors", spec.needs_factors());
    if !unused.is_empty() {
        return Err(CliError::Usage(format!(
            "{} not accepted by method '{}'",
            unused.join(", "),
            a.method
        )));
    }
    match &mut spec {
        EstimatorSpec::Ls { rho } => *rho = a.rho,
        EstimatorSpec::Poet {
            k,
            c,
            correlation_scale,
        } => {
            *k = a.k.unwrap_or(*k);
            *c = a.c;
            *correlation_scale = a.correlation_scale;
        }
        EstimatorSpec::Glasso {
            lambda,
            tol,
            max_iter,
        } => {
            *lambda = a.lambda;
            *tol = a.tol.unwrap_or(*tol);
            *max_iter = a.max_iter.unwrap_or(*max_iter);
        }
        EstimatorSpec::Mtp2 { tol, max_iter } | EstimatorSpec::Mtp2Kt { tol, max_iter } => {
            *tol = a.tol.unwrap_or(*tol);
            *max_iter = a.max_iter.unwrap_or(*max_iter);
        }
        EstimatorSpec::Sample { .. } | EstimatorSpec::Efm | EstimatorSpec::AfmLs => {}
    }
    spec.validate()?;
    if spec.needs_factors() && a.factors.is_none() {
        return Err(CliError::Usage(format!(
            "method '{}' needs --factors",
            a.method
        )));
    }
    Ok(spec)
}

pub fn run(a: EstimateArgs) -> Result<(), CliError> {
    let spec = spec_from_args(&a)?;
    let format = match a.format {
        FormatArg::Auto => PanelFormat::Auto,
        FormatArg::Long => PanelFormat::Long,
        FormatArg::Wide => PanelFormat::Wide,
    };
    let (panel, warnings) = load_returns(&resolve_data_path(&a.input), format)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    if panel.observed.is_some() {
        eprintln!("warning: missing returns are treated as zero");
    }
    let factors = match &a.factors {
        Some(p) => {
            let (f, w) = load_factors(&resolve_data_path(p))?;
            w.iter().for_each(|w| eprintln!("warning: {w}"));
            Some(f.align_to(&panel.dates)?)
        }
        None => None,
    };

    let fit = spec.fit(&panel, factors.as_ref())?;
    println!(
        "method {}  N {}  T {}  positive definite {}",
        spec.id(),
        panel.n_assets(),
        panel.n_periods(),
        fit.estimate.is_positive_definite()
    );
    if let Some(sol) = &fit.solution {
        println!(
            "kkt_residual {:.3e}  active_set_size {}  iterations {}",
            sol.kkt_residual,
            sol.active_set.len(),
            sol.iterations
        );
    }
    let record = FitRecord {
        estimate: fit.estimate,
        solution: fit.solution,
        input: fit.input,
    };
    save_json(&record, &a.out)?;
    if let Some(p) = &a.matrix_out {
        write_matrix_csv(
            p,
            &record.estimate.assets,
            record.estimate.matrix.as_array(),
        )?;
    }
    Ok(())
}
