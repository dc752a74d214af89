use std::path::Path;

use mtp2_core::estimators::CovarianceEstimate;
use mtp2_core::io::{load_json, read_header, read_matrix_csv, FitRecord, ResultDocument};
use mtp2_core::linalg::{is_positive_definite, spd_inverse, SpdMatrix};
use mtp2_core::mtp2::{is_m_matrix, kkt_report, mtp2_pair_report, BivariateT};
use ndarray::{array, Array2};

use crate::cli_error::CliError;
use crate::VerifyArgs;

/// Tolerance for matching the closed-form kernel values.
const COUNTEREXAMPLE_TOL: f64 = 1e-12;

struct Report {
    failures: Vec<String>,
}

impl Report {
    fn new() -> Self {
        Self { failures: vec![] }
    }

    fn check(&mut self, name: &str, ok: bool, detail: String) {
        println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            self.failures.push(name.to_string());
        }
    }

    fn finish(self) -> Result<(), CliError> {
        if self.failures.is_empty() {
            Ok(())
        } else {
            Err(CliError::ChecksFailed(format!(
                "failed checks: {}",
                self.failures.join(", ")
            )))
        }
    }
}

/// Bivariate t with df = 1 and precision [[1, −0.1], [−0.1, 1]] at
/// x = (−1, 1), y = (0, 0). The kernel is (1 + zᵀKz)^{−3/2}, so
/// p(x)p(y) ∝ 3.2^{−3/2} and p(x∧y)p(x∨y) ∝ 2^{−3/2}·2^{−3/2} = 2^{−3}.
fn bivariate_t_counterexample() -> Result<(), CliError> {
    let precision = SpdMatrix::new(array![[1.0, -0.1], [-0.1, 1.0]])?;
    let density = BivariateT::new(&precision, 1.0)?;
    let (x, y) = ([-1.0, 1.0], [0.0, 0.0]);
    let pair = mtp2_pair_report(&density, &x, &y)?;
    let c2 = density.normalizing_constant().powi(2);
    let lhs_kernel = pair.lhs / c2;
    let rhs_kernel = pair.rhs / c2;
    let lhs_hand = 3.2f64.powf(-1.5);
    let rhs_hand = 2f64.powi(-3);

    println!("bivariate t, df = 1, precision [[1, -0.1], [-0.1, 1]]");
    println!("x = (-1, 1), y = (0, 0), x^y = (-1, 0), xvy = (0, 1)");
    println!(
        "p(x)p(y)         = {:.15e}  (kernel {lhs_kernel:.15e}, (3.2)^(-3/2) = {lhs_hand:.15e})",
        pair.lhs
    );
    println!(
        "p(x^y)p(xvy)     = {:.15e}  (kernel {rhs_kernel:.15e}, 2^(-3) = {rhs_hand:.15e})",
        pair.rhs
    );
    println!("ratio lhs / rhs  = {:.15}", pair.lhs / pair.rhs);

    let mut r = Report::new();
    r.check(
        "kernel p(x)p(y)",
        (lhs_kernel - lhs_hand).abs() <= COUNTEREXAMPLE_TOL,
        format!("|diff| = {:.1e}", (lhs_kernel - lhs_hand).abs()),
    );
    r.check(
        "kernel p(x^y)p(xvy)",
        (rhs_kernel - rhs_hand).abs() <= COUNTEREXAMPLE_TOL,
        format!("|diff| = {:.1e}", (rhs_kernel - rhs_hand).abs()),
    );
    r.check(
        "MTP2 inequality violated",
        !pair.holds && pair.lhs > pair.rhs,
        "p(x)p(y) > p(x^y)p(xvy), so this t distribution is not MTP2".into(),
    );
    r.finish()
}

/// Checks the M-matrix property on the unit-diagonal scale, so `tol` bounds
/// `K_ij / sqrt(K_ii K_jj)` whatever the units of the data.
fn check_precision(r: &mut Report, k: &Array2<f64>, tol: f64) {
    let d: Vec<f64> = k.diag().iter().map(|v| v.abs().sqrt()).collect();
    let normalized = Array2::from_shape_fn(k.dim(), |(i, j)| k[[i, j]] / (d[i] * d[j]));
    let worst = normalized
        .indexed_iter()
        .filter(|((i, j), _)| i != j)
        .map(|(_, v)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    r.check(
        "precision is an M-matrix",
        is_m_matrix(&normalized, tol),
        format!("largest normalized off-diagonal entry {worst:.3e}, tolerance {tol:.1e}"),
    );
}

fn verify_fit(path: &Path, tol: f64) -> Result<(), CliError> {
    let record: FitRecord = load_json(path)?;
    let mut r = Report::new();
    let est = &record.estimate;
    r.check(
        "estimate is positive definite",
        est.is_positive_definite(),
        format!("method {}, N = {}", est.estimator_id, est.matrix.dim()),
    );
    if let Some(sol) = &record.solution {
        let (sigma, k) = match &sol.correlation_scale {
            Some(cs) => (cs.sigma.as_array(), cs.precision.as_array()),
            None => (sol.sigma_hat.as_array(), sol.k_hat.as_array()),
        };
        r.check(
            "solver converged",
            sol.converged,
            format!("{} iterations", sol.iterations),
        );
        check_precision(&mut r, k, 0.0);
        if let Some(input) = &record.input {
            let kkt = kkt_report(input.as_array(), sigma, k);
            r.check(
                "KKT diagonal match",
                kkt.diagonal <= tol,
                format!("{:.3e}", kkt.diagonal),
            );
            r.check(
                "KKT primal feasibility",
                kkt.primal <= tol,
                format!("{:.3e}", kkt.primal),
            );
            r.check(
                "KKT dual feasibility",
                kkt.dual <= tol,
                format!("{:.3e}", kkt.dual),
            );
            r.check(
                "KKT complementary slackness",
                kkt.complementarity <= tol,
                format!("{:.3e}", kkt.complementarity),
            );
        }
        r.check(
            "stored KKT residual",
            sol.kkt_residual <= tol,
            format!("{:.3e}", sol.kkt_residual),
        );
    }
    r.finish()
}

fn verify_matrix(path: &Path, is_precision: bool, tol: f64) -> Result<(), CliError> {
    let is_json = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let m = if is_json {
        let header = read_header(path)?;
        if header.kind == FitRecord::KIND {
            load_json::<FitRecord>(path)?.estimate.matrix.into_inner()
        } else {
            load_json::<CovarianceEstimate>(path)?.matrix.into_inner()
        }
    } else {
        read_matrix_csv(path)?.1
    };
    let asym = m
        .indexed_iter()
        .map(|((i, j), v)| (v - m[[j, i]]).abs())
        .fold(0.0, f64::max);
    let mut r = Report::new();
    r.check(
        "symmetric",
        asym <= tol * m.iter().fold(1.0f64, |a, v| a.max(v.abs())),
        format!("max |A - Aᵀ| = {asym:.3e}"),
    );
    let pd = is_positive_definite(&m);
    r.check("positive definite", pd, format!("N = {}", m.nrows()));
    if pd {
        let k = if is_precision { m } else { spd_inverse(&m)? };
        check_precision(&mut r, &k, tol);
    }
    r.finish()
}

pub fn run(a: VerifyArgs) -> Result<(), CliError> {
    if a.paper_example {
        bivariate_t_counterexample()
    } else if let Some(p) = &a.fit {
        verify_fit(p, a.tol)
    } else if let Some(p) = &a.matrix {
        verify_matrix(p, a.precision, a.tol)
    } else {
        Err(CliError::Usage(
            "one of --paper-example, --fit or --matrix is required".into(),
        ))
    }
}
