//! End-to-end exit-code contract and output-file checks for the binary.

use std::path::Path;
use std::process::{Command, Output};

use devbvp::config::{builtin, ProblemConfig};

fn devbvp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_devbvp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn write_config(dir: &Path, cfg: &ProblemConfig) -> String {
    let path = dir.join("problem.json");
    std::fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

fn read_csv_columns(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<String> = lines.next().unwrap().split(',').map(str::to_string).collect();
    let mut cols = vec![Vec::new(); header.len()];
    for line in lines {
        for (i, field) in line.split(',').enumerate() {
            cols[i].push(field.parse::<f64>().unwrap());
        }
    }
    (header, cols)
}

#[test]
fn check_passes_on_floor_problem_and_reports_rule() {
    let out = devbvp(&["check", "--builtin", "example1"]);
    assert_eq!(exit_code(&out), 0);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["main_rule_ok"], serde_json::Value::Bool(true));
    assert_eq!(v["C2.holds"], serde_json::Value::Bool(true));
}

#[test]
fn check_fails_with_exit_2_when_rule_fails() {
    let out = devbvp(&["check", "--builtin", "example2", "--k", "0.2"]);
    assert_eq!(exit_code(&out), 2);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["main_rule_ok"], serde_json::Value::Bool(false));
}

#[test]
fn config_errors_exit_1() {
    let out = devbvp(&["check", "--config", "/nonexistent/problem.json"]);
    assert_eq!(exit_code(&out), 1);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.json");
    std::fs::write(&path, "{ not json").unwrap();
    let out = devbvp(&["check", "--config", path.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 1);

    let mut cfg = builtin("trivial_constant", None).unwrap();
    cfg.f = "floor(".into();
    let cfg_path = write_config(dir.path(), &cfg);
    let out = devbvp(&["check", "--config", &cfg_path]);
    assert_eq!(exit_code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("syntax error"));

    let out = devbvp(&["check"]);
    assert_eq!(exit_code(&out), 1);
}

#[test]
fn verify_reports_both_sides() {
    let out = devbvp(&["verify", "--builtin", "example1"]);
    assert_eq!(exit_code(&out), 0);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["lower"]["is_valid"], serde_json::Value::Bool(true));
    assert_eq!(v["upper"]["is_valid"], serde_json::Value::Bool(true));

    // break the upper solution: too small at the right endpoint
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = builtin("example1", None).unwrap();
    cfg.beta = "0".into();
    let cfg_path = write_config(dir.path(), &cfg);
    let out = devbvp(&["verify", "--config", &cfg_path]);
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn solve_constant_problem_writes_exact_parabola() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = devbvp(&[
        "solve",
        "--builtin",
        "trivial_constant",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0);
    for file in ["bracket.csv", "convergence.csv", "summary.json", "conditions.json", "verify.json"] {
        assert!(out_dir.join(file).exists(), "{file} missing");
    }
    let (header, cols) = read_csv_columns(&out_dir.join("bracket.csv"));
    assert_eq!(header, ["t", "alpha", "u_star_low", "u_star_high", "beta"]);
    for (i, &t) in cols[0].iter().enumerate() {
        let expect = t * (1.0 - t);
        assert!((cols[2][i] - expect).abs() < 1e-6, "low at t={t}");
        assert!((cols[3][i] - expect).abs() < 1e-6, "high at t={t}");
    }
}

#[test]
fn solve_floor_problem_hits_endpoint_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = devbvp(&[
        "solve",
        "--builtin",
        "example1",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0);
    let (_, cols) = read_csv_columns(&out_dir.join("bracket.csv"));
    let last = cols[0].len() - 1;
    assert_eq!(cols[2][last], std::f64::consts::FRAC_PI_4);
    assert_eq!(cols[3][last], std::f64::consts::FRAC_PI_4);
}

#[test]
fn solve_exits_3_when_coefficients_miss_the_nonlinearity() {
    // f = -6.9 y with declared L1 = L2 = 0: the smallness rule holds
    // vacuously and the pair verifies, but the operator is not monotone, so
    // the ordering assertion trips (and survives the mesh-doubling retry).
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = builtin("trivial_constant", None).unwrap();
    cfg.name = "oscillatory".into();
    cfg.f = "-6.9*y".into();
    cfg.tau = "1 - t".into();
    cfg.alpha = "-1".into();
    cfg.beta = "1".into();
    cfg.psi = Some("7".into());
    cfg.mesh_n = 50;
    let cfg_path = write_config(dir.path(), &cfg);
    let out_dir = dir.path().join("out");
    let out = devbvp(&["solve", "--config", &cfg_path, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 3, "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn solve_exits_4_when_outer_budget_is_too_small() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = builtin("example1", None).unwrap();
    cfg.max_outer = 1;
    cfg.mesh_n = 50;
    let cfg_path = write_config(dir.path(), &cfg);
    let out_dir = dir.path().join("out");
    let out = devbvp(&["solve", "--config", &cfg_path, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 4);
}

#[test]
fn certify_prints_shift_for_floor_problem() {
    let out = devbvp(&["certify", "--builtin", "example1"]);
    assert_eq!(exit_code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    let value: f64 = text.trim().parse().unwrap();
    assert!(value > 0.0 && value < 1.0);

    let out = devbvp(&["certify", "--builtin", "trivial_constant"]);
    assert_eq!(exit_code(&out), 1); // no certify section
}

#[test]
fn report_aggregates_everything() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = devbvp(&[
        "report",
        "--builtin",
        "trivial_linear",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["conditions"]["main_rule_ok"], serde_json::Value::Bool(true));
    assert_eq!(v["verification"]["lower"]["is_valid"], serde_json::Value::Bool(true));
    assert!(v["solve"]["residual_l1"]["lower"].as_f64().unwrap() < 1e-8);
    assert!(out_dir.join("report.json").exists());
}

#[test]
fn thread_cap_env_var_is_validated() {
    let out = Command::new(env!("CARGO_BIN_EXE_devbvp"))
        .args(["check", "--builtin", "example1"])
        .env("DEVBVP_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 1);
    let out = Command::new(env!("CARGO_BIN_EXE_devbvp"))
        .args(["check", "--builtin", "example1"])
        .env("DEVBVP_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 0);
}

#[test]
fn mesh_and_tolerance_overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = devbvp(&[
        "solve",
        "--builtin",
        "trivial_constant",
        "--n",
        "64",
        "--tol",
        "1e-6",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0);
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(v["mesh_n"], serde_json::json!(64));
}
