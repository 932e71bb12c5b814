use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bregman_cli::{run, Command as Cmd, Hooks, RunConfig};
use proptest::prelude::*;
use tempfile::TempDir;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bregman-ocp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn out_arg(dir: &TempDir) -> String {
    dir.path().to_str().unwrap().to_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Data rows of a CSV, after checking the hash comment and header.
fn csv_rows(path: &Path, hash: &str, header: &str) -> Vec<String> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), format!("# config-hash: {hash}"));
    assert_eq!(lines.next().unwrap(), header);
    lines.map(str::to_owned).collect()
}

fn small(out: &Path) -> RunConfig {
    RunConfig {
        n_div: vec![8],
        out: out.to_path_buf(),
        seed: 7,
        asc_resolution: 1024,
        ..RunConfig::default()
    }
    .validated()
    .unwrap()
}

#[test]
fn figure_repro_single_iteration_writes_one_row() {
    let dir = TempDir::new().unwrap();
    let o = bin(&["figure-repro", "--n-div", "6", "--k-max", "1", "--out", &out_arg(&dir)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: toml::Value = toml::from_str(&fs::read_to_string(dir.path().join("figure-repro/report.toml")).unwrap()).unwrap();
    let hash = report["config_hash"].as_str().unwrap();
    let rows = csv_rows(&dir.path().join("figure-repro/figure_n6.csv"), hash, "k,err_u,err_y,err_p,B,H_value");
    assert_eq!(rows.len(), 1);
    assert!(rows[0].starts_with("1,"));
    let history = fs::read_to_string(dir.path().join("figure-repro/history_n6.csv")).unwrap();
    assert!(history.starts_with(&format!("# config-hash: {hash}\n")));
}

#[test]
fn figure_repro_orders_plateaus_across_meshes() {
    let dir = TempDir::new().unwrap();
    let cfg = RunConfig {
        n_div: vec![20, 10, 40],
        k_max: 40,
        out: dir.path().to_path_buf(),
        ..RunConfig::default()
    }
    .validated()
    .unwrap();
    let report = run(Cmd::FigureRepro, &cfg, Hooks::default()).unwrap();
    assert!(report.passed(), "{:?}", report.checks);
    assert_eq!(report.outputs.len(), 6);
    let ratios: Vec<_> = report.checks.iter().filter(|c| c.name.starts_with("final err_u ratio")).collect();
    assert_eq!(ratios.len(), 2);
    assert!(ratios[0].name.contains("n_div=20 / n_div=10"));
    for n in [10, 20, 40] {
        let rows = csv_rows(
            &dir.path().join(format!("figure-repro/figure_n{n}.csv")),
            &report.config_hash,
            "k,err_u,err_y,err_p,B,H_value",
        );
        assert_eq!(rows.len(), 40);
    }
}

#[test]
fn failed_subproblems_keep_partial_output_and_fail_the_run() {
    // A zero Newton budget is rejected by validation; the library path
    // accepts it, which forces the first subproblem to miss its accuracy.
    let dir = TempDir::new().unwrap();
    let cfg = RunConfig {
        n_div: vec![6],
        k_max: 5,
        ssn_max_iter: 0,
        eps: "1e-12".into(),
        out: dir.path().to_path_buf(),
        ..RunConfig::default()
    };
    let report = run(Cmd::FigureRepro, &cfg, Hooks::default()).unwrap();
    assert!(!report.passed());
    let check = &report.checks[0];
    assert_eq!((check.measured, check.passed), (0.0, false));
    let rows = csv_rows(
        &dir.path().join("figure-repro/figure_n6.csv"),
        &report.config_hash,
        "k,err_u,err_y,err_p,B,H_value",
    );
    assert!(rows.is_empty());
    assert!(dir.path().join("figure-repro/report.toml").exists());
}

#[test]
fn fem_order_reports_second_order() {
    let dir = TempDir::new().unwrap();
    let o = bin(&[
        "fem-order", "--n-div", "8", "--n-div", "16", "--n-div", "32", "--reference-n-div", "128", "--out",
        &out_arg(&dir),
    ]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("PASS fitted order of delta(h)"));
    let text = fs::read_to_string(dir.path().join("fem-order/fem_order.csv")).unwrap();
    assert_eq!(text.lines().count(), 2 + 3);
}

#[test]
fn fem_order_refuses_short_families_and_unnested_meshes() {
    let dir = TempDir::new().unwrap();
    let o = bin(&["fem-order", "--n-div", "8", "--n-div", "16", "--out", &out_arg(&dir)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("at least 3 meshes"));
    let o = bin(&[
        "fem-order", "--n-div", "8", "--n-div", "16", "--n-div", "24", "--reference-n-div", "64", "--out",
        &out_arg(&dir),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn stopping_index_with_inline_deltas() {
    let dir = TempDir::new().unwrap();
    let out = out_arg(&dir);
    let o = bin(&[
        "stopping-index", "--n-div", "8", "--n-div", "16", "--n-div", "32", "--delta", "4e-3", "--delta", "1e-3",
        "--delta", "2.5e-4", "--c-budget", "10", "--out", &out,
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: toml::Value =
        toml::from_str(&fs::read_to_string(dir.path().join("stopping-index/report.toml")).unwrap()).unwrap();
    let hash = report["config_hash"].as_str().unwrap();
    let rows = csv_rows(&dir.path().join("stopping-index/stopping_index.csv"), hash, "h,delta,k");
    let ks: Vec<u64> = rows.iter().map(|r| r.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(ks.len(), 3);
    assert!(ks.windows(2).all(|w| w[0] <= w[1]), "{ks:?}");
    assert_eq!(report["values"]["strictly_increases"].as_float(), Some(1.0));
}

#[test]
fn stopping_index_single_mesh_makes_no_monotonicity_claim() {
    let dir = TempDir::new().unwrap();
    let cfg = RunConfig {
        n_div: vec![8],
        delta: vec![4e-3],
        out: dir.path().to_path_buf(),
        ..RunConfig::default()
    }
    .validated()
    .unwrap();
    let report = run(Cmd::StoppingIndex, &cfg, Hooks::default()).unwrap();
    assert!(report.checks.is_empty());
    assert!(report.values.contains_key("k_h1.25e-1"));
    assert!(!report.values.contains_key("strictly_increases"));
}

#[test]
fn stopping_index_rejects_inadmissible_budget() {
    let dir = TempDir::new().unwrap();
    let o = bin(&[
        "stopping-index", "--n-div", "8", "--delta", "4e-3", "--c-budget", "0.01", "--out", &out_arg(&dir),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("budget C = 0.01"), "{}", stderr(&o));
}

#[test]
fn stopping_index_calibrates_delta_from_the_mesh_family() {
    let dir = TempDir::new().unwrap();
    let cfg = RunConfig {
        n_div: vec![8, 16, 32],
        reference_n_div: 128,
        out: dir.path().to_path_buf(),
        ..RunConfig::default()
    }
    .validated()
    .unwrap();
    let report = run(Cmd::StoppingIndex, &cfg, Hooks::default()).unwrap();
    assert!(report.passed());
    assert!(report.values["c_h2"] > 0.0);
    assert_eq!(report.values["strictly_increases"], 1.0);
}

#[test]
fn asc_check_writes_the_measure_table() {
    let dir = TempDir::new().unwrap();
    let report = run(Cmd::AscCheck, &small(dir.path()), Hooks::default()).unwrap();
    let rows = csv_rows(&dir.path().join("asc-check/asc.csv"), &report.config_hash, "eps,measure");
    assert_eq!(rows.len(), 21);
    let exponent = report.checks.iter().find(|c| c.name == "ASC fitted exponent").unwrap();
    assert_eq!(exponent.threshold, "in [0.9, 1.1]");
    assert_eq!(exponent.measured, report.values["asc_fitted_exponent"]);
}

#[test]
fn validate_is_bit_identical_for_a_fixed_seed() {
    let dir = TempDir::new().unwrap();
    let cfg = small(dir.path());
    run(Cmd::Validate, &cfg, Hooks::default()).unwrap();
    let first = fs::read(dir.path().join("validate/report.toml")).unwrap();
    run(Cmd::Validate, &cfg, Hooks::default()).unwrap();
    let second = fs::read(dir.path().join("validate/report.toml")).unwrap();
    assert_eq!(first, second);
    assert!(dir.path().join("validate/timings.toml").exists());
}

#[test]
fn validate_detects_a_corrupted_mass_matrix() {
    let dir = TempDir::new().unwrap();
    let cfg = small(dir.path());
    let clean = run(Cmd::Validate, &cfg, Hooks::default()).unwrap();
    let corrupt = run(Cmd::Validate, &cfg, Hooks { corrupt_mass: true }).unwrap();
    let name = "self-adjointness, mass-matrix load, n_div=8";
    let find = |r: &bregman_cli::RunReport| r.checks.iter().find(|c| c.name == name).unwrap().clone();
    assert!(find(&clean).passed);
    let bad = find(&corrupt);
    assert!(!bad.passed && bad.measured > 1e-6, "{bad:?}");
    assert!(!corrupt.passed());
}

#[test]
fn validate_defaults_fail_only_on_the_asc_exponent() {
    let dir = TempDir::new().unwrap();
    let o = bin(&["validate", "--out", &out_arg(&dir)]);
    assert_eq!(o.status.code(), Some(1));
    let text = stdout(&o);
    let failures: Vec<&str> = text.lines().filter(|l| l.starts_with("FAIL")).collect();
    assert_eq!(failures.len(), 1, "{text}");
    assert!(failures[0].starts_with("FAIL ASC fitted exponent"));
    assert!(text.lines().filter(|l| l.starts_with("PASS")).count() >= 10);
}

#[test]
fn config_file_is_loaded_and_flags_override_it() {
    let dir = TempDir::new().unwrap();
    let path: PathBuf = dir.path().join("run.toml");
    fs::write(&path, "n_div = [4, 8]\nk_max = 3\neps = \"k^-2\"\n").unwrap();
    let o = bin(&["show-config", "--config", path.to_str().unwrap(), "--k-max", "9"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let cfg = RunConfig::from_toml(&stdout(&o)).unwrap();
    assert_eq!((cfg.n_div, cfg.k_max, cfg.eps.as_str()), (vec![4, 8], 9, "1*k^-2"));
}

#[test]
fn configuration_errors_exit_with_code_two() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "n_div = [4]\nmystery = 1\n").unwrap();
    let cases: Vec<Vec<String>> = vec![
        vec!["fem-order".into(), "--config".into(), path.to_str().unwrap().into()],
        vec!["fem-order".into(), "--config".into(), dir.path().join("missing.toml").to_str().unwrap().into()],
        vec!["figure-repro".into(), "--alpha".into(), "fast".into()],
        vec!["figure-repro".into(), "--k-max".into(), "0".into()],
        vec!["figure-repro".into(), "--n-div".into(), "1".into()],
        vec!["validate".into(), "--unknown".into()],
    ];
    for args in cases {
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        let o = bin(&refs);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn command_names_parse_back() {
    for c in Cmd::ALL {
        assert_eq!(c.name().parse::<Cmd>().unwrap(), c);
    }
    assert!("plot".parse::<Cmd>().is_err());
}

fn rule() -> impl Strategy<Value = String> {
    prop_oneof![
        (1e-3..10.0f64).prop_map(|c| format!("{c}")),
        (1e-3..10.0f64, -4.0..0.0f64).prop_map(|(c, p)| format!("{c}*k^{p}")),
        (1e-3..10.0f64, 0.1..1.0f64).prop_map(|(c, r)| format!("{c}*{r}^k")),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn config_round_trip_is_byte_identical(
        n_div in prop::collection::vec(2usize..200, 1..5),
        alpha in rule(),
        eps in rule(),
        k_max in 1usize..10_000,
        seed in 0u64..=i64::MAX as u64,
        c_budget in 1e-3..1e6f64,
        delta_scale in prop::option::of(1e-6..1.0f64),
    ) {
        let delta = delta_scale.map(|d| vec![d; n_div.len()]).unwrap_or_default();
        let cfg = RunConfig { n_div, alpha, eps, k_max, seed, c_budget, delta, ..RunConfig::default() }
            .validated()
            .unwrap();
        let text = cfg.to_toml().unwrap();
        let back = RunConfig::from_toml(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.to_toml().unwrap(), text);
        prop_assert_eq!(back.hash().unwrap(), cfg.hash().unwrap());
        // Canonical schedules describe the same functions.
        let (a, b) = (cfg.schedules().unwrap(), back.schedules().unwrap());
        for k in [1, 2, 10, 500] {
            prop_assert_eq!(a.alpha(k), b.alpha(k));
            prop_assert_eq!(a.epsilon(k), b.epsilon(k));
        }
    }
}
