use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bsderk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bsderk")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn order_check_crank_nicholson() {
    let out = bsderk(&["order-check", "--tableau", "crank_nicholson", "--order", "2"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["report"]["satisfied"], true);
    assert_eq!(v["classified_order"], 2);
    assert_eq!(v["config"]["command"], "order-check");
}

#[test]
fn order_check_implicit_barrier_fails() {
    let out = bsderk(&["order-check", "--tableau", "two_stage_implicit_o3:c2=0.5", "--order", "3", "--fz", "nonzero"]);
    assert_eq!(code(&out), 1);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["report"]["satisfied"], false);
    assert_eq!(v["classified_order"], 2);
}

#[test]
fn converge_explicit_euler() {
    let dir = tempfile::tempdir().unwrap();
    let (json, csv) = (dir.path().join("r.json"), dir.path().join("r.csv"));
    let out = bsderk(&[
        "converge",
        "--problem",
        "brownian_sine",
        "--scheme",
        "explicit_euler",
        "--n",
        "8,16,32,64,128",
        "--out-json",
        json.to_str().unwrap(),
        "--out-csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rep = read_json(&json);
    let slope = rep["checks"][0]["fit"]["slope"].as_f64().unwrap();
    assert!((slope - 1.0).abs() < 0.25, "slope {slope}");
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(!text.contains('\r'));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "ladder_param,err_Y,err_Z,ratio_Y,ratio_Z");
    assert_eq!(lines.len(), 1 + 5 + 3);
    assert!(lines[1].starts_with("8,"));
    assert_eq!(lines[8], "pass,true,,,");
}

#[test]
fn embedded_config_reproduces_report() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, cfg) = (dir.path().join("a.json"), dir.path().join("b.json"), dir.path().join("cfg.json"));
    let out = bsderk(&["local-trunc", "--tableau", "crank_nicholson", "--h", "0.2,0.1,0.05", "--out-json", a.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    std::fs::write(&cfg, serde_json::to_string(&read_json(&a)["config"]).unwrap()).unwrap();
    let out = bsderk(&["local-trunc", "--config", cfg.to_str().unwrap(), "--out-json", b.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"tableau": "explicit_euler", "n": [8, 16, 32], "solver": {"grid": {"n_nodes": 401}}}"#).unwrap();
    let out = bsderk(&["converge", "--config", cfg.to_str().unwrap(), "--n", "8,16,32,64"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["config"]["n"], serde_json::json!([8, 16, 32, 64]));
    assert_eq!(v["config"]["solver"]["grid"]["n_nodes"], 401);
    assert_eq!(v["config"]["solver"]["grid"]["n_quad"], 40);
    assert_eq!(v["rows"].as_array().unwrap().len(), 4);
}

#[test]
fn missed_tolerance_exits_one() {
    let out = bsderk(&["converge", "--tableau", "explicit_euler", "--n", "8,16,32", "--min-slope", "1.5"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"tableau": "explicit_euler", "nodes": 3}"#).unwrap();
    assert_eq!(code(&bsderk(&["converge", "--config", cfg.to_str().unwrap()])), 2);
    std::fs::write(&cfg, r#"{"command": "stability"}"#).unwrap();
    assert_eq!(code(&bsderk(&["converge", "--config", cfg.to_str().unwrap()])), 2);
    assert_eq!(code(&bsderk(&["converge", "--tableau", "rk4"])), 2);
    assert_eq!(code(&bsderk(&["converge"])), 2);
    assert_eq!(code(&bsderk(&["converge", "--tableau", "explicit_euler", "--problem", "heston"])), 2);
    assert_eq!(code(&bsderk(&["zproxy", "--psi", "hat"])), 2);
    assert_eq!(code(&bsderk(&["converge", "--tableau", "explicit_euler", "--nodes", "4"])), 2);
    assert_eq!(code(&bsderk(&["barrier", "--problem", "brownian_fzero"])), 2);
}

#[test]
fn numeric_failure_exits_three() {
    // Implicit Euler with h = 1 breaks the fixed-point contraction bound.
    let out = bsderk(&["converge", "--tableau", "implicit_euler", "--n", "1,2,4"]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn thread_cap_does_not_change_output() {
    let args = ["stability", "--tableau", "three_stage", "--n", "8,16"];
    let one = Command::new(env!("CARGO_BIN_EXE_bsderk")).args(args).env("BSDERK_THREADS", "1").output().unwrap();
    let many = bsderk(&args);
    assert_eq!(code(&one), 0);
    assert_eq!(one.stdout, many.stdout);
    let bad = Command::new(env!("CARGO_BIN_EXE_bsderk")).args(args).env("BSDERK_THREADS", "zero").output().unwrap();
    assert_eq!(code(&bad), 2);
}

#[test]
fn suite_runs_every_criterion() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("suite.json");
    let out = bsderk(&["suite", "--out-json", json.to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(code(&out), 0, "{stdout}");
    for id in 1..=9 {
        assert!(stdout.contains(&format!("criterion {id}: PASS")), "{stdout}");
    }
    let v = read_json(&json);
    assert_eq!(v["criteria"].as_array().unwrap().len(), 9);
    assert_eq!(v["pass"], true);
}

#[test]
fn inline_tableau_config() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, a, b) = (dir.path().join("cfg.json"), dir.path().join("a.json"), dir.path().join("b.json"));
    let t: bsderk::Tableau64 = bsderk::tableau::named("three_stage:c2=1/3,c3=2/3").unwrap();
    let body = serde_json::json!({ "command": "converge", "tableau": t, "n": [8, 16, 32] });
    std::fs::write(&cfg, body.to_string()).unwrap();
    let out = bsderk(&["converge", "--config", cfg.to_str().unwrap(), "--out-json", a.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rep = read_json(&a);
    assert_eq!(rep["config"]["order"], 3);
    assert_eq!(rep["config"]["psi"], "default_bm:2");
    std::fs::write(&cfg, rep["config"].to_string()).unwrap();
    assert_eq!(code(&bsderk(&["converge", "--config", cfg.to_str().unwrap(), "--out-json", b.to_str().unwrap()])), 0);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}
