use mtp2_core::io::{
    generate_bundle, save_bundle, save_json, write_matrix_csv, DiagonalRule, Generator,
    SyntheticSpec,
};
use mtp2_core::mtp2::is_m_matrix;

use crate::cli_error::CliError;
use crate::config::read_toml;
use crate::SynthArgs;

/// Off-diagonal precision entries below this (relative to the largest
/// diagonal entry) count as zero in the sparsity summary.
const ZERO_TOL: f64 = 1e-12;
/// Tolerance of the M-matrix check in the truth summary.
const M_MATRIX_TOL: f64 = 1e-10;

fn spec_from_args(a: &SynthArgs) -> Result<SyntheticSpec, CliError> {
    let mut spec = match &a.spec {
        Some(p) => read_toml::<SyntheticSpec>(p)?,
        None => {
            let missing: Vec<&str> = [
                ("--generator", a.generator.is_none()),
                ("--n", a.n.is_none()),
                ("--t", a.t.is_none()),
            ]
            .iter()
            .filter(|(_, m)| *m)
            .map(|(f, _)| *f)
            .collect();
            if !missing.is_empty() {
                return Err(CliError::Usage(format!(
                    "{} required without --spec",
                    missing.join(", ")
                )));
            }
            SyntheticSpec::new(Generator::GaussianMtp2, 1, 1, 0)
        }
    };
    if let Some(g) = &a.generator {
        spec.generator = Generator::from_name(g)?;
    }
    spec.n = a.n.unwrap_or(spec.n);
    spec.t = a.t.unwrap_or(spec.t);
    spec.seed = a.seed.unwrap_or(spec.seed);
    spec.edge_prob = a.edge_prob.unwrap_or(spec.edge_prob);
    spec.beta_range = (
        a.beta_min.unwrap_or(spec.beta_range.0),
        a.beta_max.unwrap_or(spec.beta_range.1),
    );
    spec.df = a.df.unwrap_or(spec.df);
    spec.scale = a.scale.unwrap_or(spec.scale);
    if let Some(d) = &a.diagonal {
        spec.diagonal = match d.as_str() {
            "spectral_shift" => DiagonalRule::SpectralShift,
            "row_sum" => DiagonalRule::RowSum,
            other => {
                return Err(CliError::Usage(format!(
                    "unknown diagonal rule '{other}', expected spectral_shift or row_sum"
                )))
            }
        };
    }
    spec.validate()?;
    Ok(spec)
}

pub fn run(a: SynthArgs) -> Result<(), CliError> {
    let spec = spec_from_args(&a)?;
    let (bundle, truth) = generate_bundle(&spec)?;
    save_bundle(&bundle, &a.out)?;
    save_json(&truth, &a.out.join("truth.json"))?;
    let assets = &bundle.returns.assets;
    write_matrix_csv(
        &a.out.join("truth_sigma.csv"),
        assets,
        truth.sigma.as_array(),
    )?;
    write_matrix_csv(
        &a.out.join("truth_precision.csv"),
        assets,
        truth.precision.as_array(),
    )?;
    std::fs::write(
        a.out.join("spec.toml"),
        toml::to_string(&spec).map_err(|e| CliError::Usage(e.to_string()))?,
    )?;

    let k = truth.precision.as_array();
    let n = k.nrows();
    let scale = k.diag().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let zeros = k
        .indexed_iter()
        .filter(|((i, j), v)| i < j && v.abs() <= ZERO_TOL * scale)
        .count();
    let pairs = n * (n - 1) / 2;
    println!(
        "generator {}  N {}  T {}  seed {}",
        spec.generator.name(),
        spec.n,
        spec.t,
        spec.seed
    );
    println!("precision is an M-matrix: {}", is_m_matrix(k, M_MATRIX_TOL));
    println!(
        "precision sparsity: {zeros} of {pairs} off-diagonal pairs are zero ({:.1}%)",
        if pairs == 0 {
            0.0
        } else {
            100.0 * zeros as f64 / pairs as f64
        }
    );
    println!("wrote {}", a.out.display());
    Ok(())
}
