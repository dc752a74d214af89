mod support;

use std::fs;
use std::path::Path;

use serde_json::Value;
use support::{fixture, run, GoldenMetrics};
use tempfile::tempdir;

fn stdout(out: &std::process::Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &std::process::Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn returns_csv() -> std::path::PathBuf {
    fixture("bundle/returns.csv")
}

fn estimate(method: &str, extra: &[&str], out: &Path) -> std::process::Output {
    let mut args = vec!["estimate".to_string(), "--input".into()];
    args.push(returns_csv().display().to_string());
    args.extend(["--method".to_string(), method.to_string()]);
    args.extend(extra.iter().map(|s| s.to_string()));
    args.extend(["--out".to_string(), out.display().to_string()]);
    run(args)
}

fn copy_dir(from: &Path, to: &Path, skip: &[&str]) {
    fs::create_dir_all(to).unwrap();
    for entry in fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let name = entry.file_name();
        if !skip.iter().any(|s| name == **s) {
            fs::copy(entry.path(), to.join(&name)).unwrap();
        }
    }
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(run(["--help"]).status.code(), Some(0));
    assert_eq!(run(["--version"]).status.code(), Some(0));
    assert_eq!(run(["backtest", "--help"]).status.code(), Some(0));
}

#[test]
fn estimate_mtp2_writes_a_fit_that_verifies() {
    let dir = tempdir().unwrap();
    let fit = dir.path().join("fit.json");
    let matrix = dir.path().join("sigma.csv");
    let out = estimate("mtp2", &["--matrix-out", matrix.to_str().unwrap()], &fit);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stdout(&out).contains("kkt_residual"));

    let doc: Value = serde_json::from_str(&fs::read_to_string(&fit).unwrap()).unwrap();
    assert_eq!(doc["kind"], "fit");
    let residual = doc["body"]["solution"]["kkt_residual"].as_f64().unwrap();
    assert!(residual <= 1e-7, "residual {residual}");

    let out = run(["verify", "--fit", fit.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    assert!(!stdout(&out).contains("FAIL"));

    let out = run(["verify", "--matrix", matrix.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
}

#[test]
fn estimate_rejects_bad_parameters_with_usage_exit() {
    let dir = tempdir().unwrap();
    let fit = dir.path().join("fit.json");
    let out = estimate("ls", &["--rho", "1.5"], &fit);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("RhoOutOfRange"), "{}", stderr(&out));

    assert_eq!(
        estimate("mtp2", &["--rho", "0.5"], &fit).status.code(),
        Some(1)
    );
    assert_eq!(estimate("bogus", &[], &fit).status.code(), Some(1));
    assert_eq!(estimate("efm", &[], &fit).status.code(), Some(1));
    assert_eq!(estimate("mtp2", &["--bogus"], &fit).status.code(), Some(1));
    assert!(!fit.exists());
}

#[test]
fn estimate_on_empty_input_is_a_data_error() {
    let dir = tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "date,A,B\n").unwrap();
    let out = run([
        "estimate",
        "--input",
        empty.to_str().unwrap(),
        "--method",
        "sample",
        "--out",
        dir.path().join("fit.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));

    let out = run([
        "estimate",
        "--input",
        dir.path().join("absent.csv").to_str().unwrap(),
        "--method",
        "sample",
        "--out",
        dir.path().join("fit.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_flags_positive_off_diagonal_precision() {
    let dir = tempdir().unwrap();
    // Its inverse has a positive off-diagonal entry.
    let cov = dir.path().join("cov.csv");
    fs::write(&cov, ",a,b\na,1.0,-0.3\nb,-0.3,1.0\n").unwrap();
    let out = run(["verify", "--matrix", cov.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stdout(&out).contains("FAIL precision is an M-matrix"));

    let precision = dir.path().join("k.csv");
    fs::write(&precision, ",a,b\na,1.0,0.3\nb,0.3,1.0\n").unwrap();
    let out = run([
        "verify",
        "--matrix",
        precision.to_str().unwrap(),
        "--precision",
    ]);
    assert_eq!(out.status.code(), Some(3));

    fs::write(&precision, ",a,b\na,1.0,-0.3\nb,-0.3,1.0\n").unwrap();
    let out = run([
        "verify",
        "--matrix",
        precision.to_str().unwrap(),
        "--precision",
    ]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn verify_counterexample_passes() {
    let out = run(["verify", "--paper-example"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert_eq!(text.matches("PASS").count(), 3, "{text}");
    assert!(run(["verify"]).status.code() == Some(1));
}

#[test]
fn backtest_reproduces_golden_metrics_across_thread_counts() {
    let golden = GoldenMetrics::load();
    let dir = tempdir().unwrap();
    for threads in ["1", "3"] {
        let out_path = dir.path().join(format!("t{threads}/gmv.json"));
        let out = run([
            "--threads",
            threads,
            "backtest",
            "--config",
            fixture("gmv.toml").to_str().unwrap(),
            "--data",
            fixture("bundle").to_str().unwrap(),
            "--out",
            out_path.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
        assert!(stdout(&out).contains("mtp2  N=10  T=120 | std×100"));
        let gap = golden.max_gap(&GoldenMetrics::from_result(&out_path));
        assert!(gap <= 1e-10, "threads {threads}: gap {gap}");
        assert!(out_path.with_file_name("gmv_monthly.csv").exists());
        assert!(out_path.with_file_name("gmv_weights.csv").exists());
    }
}

#[test]
fn backtest_with_more_assets_than_window_days_completes() {
    let dir = tempdir().unwrap();
    let data = dir.path().join("data");
    let out = run([
        "synth",
        "--generator",
        "gaussian_mtp2",
        "--n",
        "100",
        "--t",
        "88",
        "--seed",
        "3",
        "--out",
        data.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let config = dir.path().join("wide.toml");
    fs::write(
        &config,
        "portfolio_size = 100\nestimation_window = 25\nhorizon_months = 3\n\
         universe = \"all_assets\"\n\n[estimator]\nmethod = \"mtp2\"\n",
    )
    .unwrap();
    let result = dir.path().join("wide.json");
    let out = run([
        "backtest",
        "--config",
        config.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        result.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(
        stdout(&out).contains("3 of 3 periods completed"),
        "{}",
        stdout(&out)
    );
}

#[test]
fn backtest_without_caps_names_the_missing_data() {
    let dir = tempdir().unwrap();
    let data = dir.path().join("nocaps");
    copy_dir(&fixture("bundle"), &data, &["caps.csv"]);
    let out = run([
        "backtest",
        "--config",
        fixture("gmv.toml").to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        dir.path().join("bt.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("MissingCaps"), "{}", stderr(&out));
}

#[test]
fn compare_matches_golden_table_with_nan_cell() {
    let dir = tempdir().unwrap();
    let out_dir = dir.path().join("cmp");
    let out = run([
        "compare",
        "--config",
        fixture("compare.toml").to_str().unwrap(),
        "--data",
        fixture("bundle").to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let csv = fs::read_to_string(out_dir.join("compare.csv")).unwrap();
    assert_eq!(
        csv,
        fs::read_to_string(fixture("golden/compare.csv")).unwrap()
    );
    let text = fs::read_to_string(out_dir.join("compare.txt")).unwrap();
    assert_eq!(
        text,
        fs::read_to_string(fixture("golden/compare.txt")).unwrap()
    );
    assert_eq!(stdout(&out), text);

    // sample-inv has no inverse at N = 20 > T = 10; every other cell is a number.
    let row: Vec<&str> = csv
        .lines()
        .find(|l| l.starts_with("sharpe,20,10,"))
        .unwrap()
        .split(',')
        .collect();
    assert_eq!(row[4], "nan");
    for cell in [row[3], row[5], row[6], row[7]] {
        cell.trim_end_matches('*').parse::<f64>().unwrap();
    }
}

#[test]
fn compare_marks_the_first_of_tied_columns() {
    let dir = tempdir().unwrap();
    let out_dir = dir.path().join("cmp");
    let out = run([
        "compare",
        "--config",
        fixture("compare.toml").to_str().unwrap(),
        "--data",
        fixture("bundle").to_str().unwrap(),
        "--methods",
        "ls,ls",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let csv = fs::read_to_string(out_dir.join("compare.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        assert!(cells[3].ends_with('*'), "{line}");
        assert_eq!(cells[3].trim_end_matches('*'), cells[4], "{line}");
    }
}

#[test]
fn compare_rejects_unknown_method() {
    let dir = tempdir().unwrap();
    let out = run([
        "compare",
        "--config",
        fixture("compare.toml").to_str().unwrap(),
        "--data",
        fixture("bundle").to_str().unwrap(),
        "--methods",
        "sample,nonsense",
        "--out",
        dir.path().join("cmp").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn synth_is_deterministic_for_a_seed() {
    let dir = tempdir().unwrap();
    let gen = |name: &str| {
        let path = dir.path().join(name);
        let out = run([
            "synth",
            "--generator",
            "single_factor",
            "--n",
            "12",
            "--t",
            "80",
            "--seed",
            "42",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
        (path, stdout(&out))
    };
    let (a, summary) = gen("a");
    let (b, _) = gen("b");
    assert!(
        summary.contains("precision is an M-matrix: true"),
        "{summary}"
    );
    for file in [
        "returns.csv",
        "caps.csv",
        "factors.csv",
        "riskfree.csv",
        "truth.json",
        "truth_sigma.csv",
        "truth_precision.csv",
        "spec.toml",
    ] {
        assert_eq!(
            fs::read(a.join(file)).unwrap(),
            fs::read(b.join(file)).unwrap(),
            "{file}"
        );
    }
}

#[test]
fn synth_spec_file_round_trips() {
    let dir = tempdir().unwrap();
    let first = dir.path().join("first");
    let out = run([
        "synth",
        "--generator",
        "elliptical_t_inverse_m",
        "--n",
        "6",
        "--t",
        "50",
        "--seed",
        "9",
        "--out",
        first.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let second = dir.path().join("second");
    let out = run([
        "synth",
        "--spec",
        first.join("spec.toml").to_str().unwrap(),
        "--out",
        second.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(
        fs::read(first.join("returns.csv")).unwrap(),
        fs::read(second.join("returns.csv")).unwrap()
    );
}

#[test]
fn synth_rejects_unknown_generator_and_missing_sizes() {
    let dir = tempdir().unwrap();
    let out_dir = dir.path().join("x");
    let out = run([
        "synth",
        "--generator",
        "lognormal",
        "--n",
        "5",
        "--t",
        "10",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let out = run([
        "synth",
        "--generator",
        "single_factor",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("--n"));
}
