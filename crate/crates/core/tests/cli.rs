use std::io::Write;

use approx::assert_relative_eq;
use cogmac::cli::{
    config_flags, parse, run, Command, ParseError, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE,
};
use cogmac::sweep::{read_csv, CSV_HEADER};
use cogmac::FadingModel;

fn invoke(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("cogmac").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

fn value(text: &str, key: &str) -> f64 {
    let prefix = format!("{key}: ");
    text.lines()
        .find_map(|l| l.strip_prefix(&prefix))
        .unwrap_or_else(|| panic!("no `{key}` in\n{text}"))
        .parse()
        .unwrap()
}

#[test]
fn simulate_defaults_p_to_inverse_n() {
    let args = [
        "cogmac",
        "simulate",
        "--model-h",
        "weibull:4",
        "--model-g",
        "rayleigh",
        "--pave-db",
        "15",
        "--qave-db",
        "0",
        "--n",
        "500",
    ];
    let cli = parse(args).unwrap();
    let Command::Simulate(a) = cli.command else {
        panic!("wrong subcommand");
    };
    assert_eq!(a.network.model_h, FadingModel::Weibull { c: 4.0 });
    assert_eq!(a.slots, 100_000);
    assert_eq!(a.seed, 0);
    let config = a.network.network().unwrap();
    assert_eq!(config.sched_prob, 0.002);
    assert_relative_eq!(config.p_ave, 31.6228, max_relative = 1e-5);
    assert_eq!(config.q_ave, 1.0);
}

#[test]
fn usage_errors_exit_with_two() {
    for args in [
        &["simulate", "--model-h", "weibull", "--n", "5"][..],
        &["simulate", "--model-h", "lognormal:1", "--n", "5"],
        &["duals", "--n", "0"],
        &["duals", "--n", "10", "--pave-db", "inf"],
        &["duals"],
        &["nonsense"],
    ] {
        let (code, _, err) = invoke(args);
        assert_eq!(code, EXIT_USAGE, "{args:?}");
        assert!(!err.is_empty());
    }
    let (_, _, err) = invoke(&["duals", "--n", "10", "--model-g", "weibull"]);
    assert!(err.contains("--model-g"), "{err}");
}

#[test]
fn duals_prints_multipliers_and_small_residuals() {
    let (code, out, _) = invoke(&["duals", "--n", "10"]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(value(&out, "p"), 0.1);
    assert!(value(&out, "lambda") > 0.0 && value(&out, "mu") > 0.0);
    assert!(value(&out, "threshold") >= 1.0);
    for key in [
        "power_residual",
        "interference_residual",
        "schedule_residual",
    ] {
        assert!(value(&out, key).abs() < 1e-6, "{key}");
    }
    let (code, out, _) = invoke(&["duals", "--n", "10", "--csv"]);
    assert_eq!(code, EXIT_OK);
    let mut r = csv::Reader::from_reader(out.as_bytes());
    assert_eq!(&r.headers().unwrap()[2], "lambda");
    assert_eq!(r.records().count(), 1);
}

#[test]
fn simulate_is_reproducible_and_worker_independent() {
    let base = ["simulate", "--n", "20", "--slots", "5000", "--seed", "9"];
    let (c1, a, _) = invoke(&[&base[..], &["--workers", "1"]].concat());
    let (c2, b, _) = invoke(&[&base[..], &["--workers", "3"]].concat());
    assert_eq!((c1, c2), (EXIT_OK, EXIT_OK));
    assert_eq!(a, b);
    assert_eq!(value(&a, "slots"), 5000.0);
    let (_, other, _) = invoke(&["simulate", "--n", "20", "--slots", "5000", "--seed", "10"]);
    assert_ne!(value(&a, "throughput"), value(&other, "throughput"));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let mut file = tempfile::NamedTempFile::new().unwrap();
    writeln!(
        file,
        "# network\nn = 40\nmodel_h = nakagami:2\n\npave_db = 10\np = 0.05"
    )
    .unwrap();
    let path = file.path().to_str().unwrap();

    let cli = parse(["cogmac", "duals", "--config", path, "--n", "30"]).unwrap();
    let Command::Duals(a) = cli.command else {
        panic!("wrong subcommand");
    };
    assert_eq!(a.n, 30);
    assert_eq!(a.model_h, FadingModel::Nakagami { m: 2.0 });
    assert_eq!(a.pave_db, 10.0);
    assert_eq!(a.p, Some(0.05));

    let flags = config_flags("seed = 4\ncsv = true\n").unwrap();
    assert_eq!(flags, ["--seed=4", "--csv"]);
    assert!(config_flags("no separator").is_err());
    assert!(matches!(
        parse(["cogmac", "duals", "--config", "/nonexistent/cogmac.cfg"]),
        Err(ParseError::File(_))
    ));
    let (code, _, _) = invoke(&["duals", "--config", "/nonexistent/cogmac.cfg"]);
    assert_eq!(code, EXIT_USAGE);
}

#[test]
fn sweep_writes_csv_to_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.csv");
    let (code, out, err) = invoke(&[
        "sweep",
        "--model-h",
        "rayleigh",
        "--n-list",
        "30,10,20",
        "--slots",
        "2000",
        "--output",
        path.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(out.is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().next().unwrap(), CSV_HEADER.join(","));
    let rows = read_csv(text.as_bytes()).unwrap();
    assert_eq!(
        rows.iter().map(|r| r.n_users).collect::<Vec<_>>(),
        [10, 20, 30]
    );
    assert!(rows
        .iter()
        .all(|r| r.stderr >= 0.0 && r.throughput.is_finite()));

    let (code, stdout_csv, _) = invoke(&[
        "sweep",
        "--model-h",
        "rayleigh",
        "--n-list",
        "30,10,20",
        "--slots",
        "2000",
    ]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(stdout_csv, text);
}

#[test]
fn sweep_reports_failed_rows() {
    let (code, out, err) = invoke(&[
        "sweep",
        "--model-h",
        "rayleigh",
        "--n-list",
        "1,10",
        "--slots",
        "500",
    ]);
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("n=1"), "{err}");
    assert_eq!(read_csv(out.as_bytes()).unwrap().len(), 1);
}

#[test]
fn oracle_check_agrees_and_rejects_infeasible_budgets() {
    let (code, out, _) = invoke(&["oracle-check", "--grid-h", "2", "--grid-g", "3"]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(value(&out, "states"), 6.0);
    assert!(value(&out, "gap") <= 1e-6);
    assert_relative_eq!(
        value(&out, "lambda"),
        value(&out, "closed_form_lambda"),
        max_relative = 1e-6
    );

    let (code, _, err) = invoke(&["oracle-check", "--interference", "-1"]);
    assert_eq!(code, EXIT_NUMERIC);
    assert!(err.contains("infeasible"), "{err}");
}

#[test]
fn dist_check_prints_table() {
    let (code, out, _) = invoke(&["dist-check", "--samples", "20000", "--seed", "3"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.lines().next().unwrap().starts_with("model"));
    assert_eq!(out.lines().filter(|l| l.contains("PASS")).count(), 28);
    assert!(out.trim_end().ends_with("28 checks, 0 failed"));
}
