use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn delaycert(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_delaycert")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn region_for_example1() {
    let out = delaycert(&["--example", "ex1", "region"]);
    assert!(out.status.success());
    let v = json(&out);
    let lr = v["razumikhin"]["Delta"].as_f64().unwrap();
    assert!((lr - 0.0427).abs() < 0.01 * 0.0427, "{lr}");
    assert_eq!(v["krasovskii"]["path"], "scalar");
}

#[test]
fn constants_for_example2() {
    let v = json(&delaycert(&["--example", "ex2", "constants"]));
    assert_eq!(v["n"], 2);
    assert_eq!(v["growth"]["m1"], 3.0);
    let w = v["lyapunov"]["w"].as_f64().unwrap();
    assert!((w - 0.15 / 11.0).abs() < 1e-15);
}

#[test]
fn reproduce_tables_exit_status_follows_cells() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("cells.csv");
    let out = delaycert(&["reproduce-tables", "--out", csv.to_str().unwrap()]);
    let v = json(&out);
    let failed: Vec<String> = v["tables"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|t| t["failed"].as_array().unwrap().iter().map(|c| format!("{}:{}", t["table"], c.as_str().unwrap())))
        .collect();
    assert_eq!(out.status.success(), failed.is_empty());
    assert_eq!(v["passed"], failed.is_empty());
    let rows = csv_rows(&csv);
    assert_eq!(rows[0][..2], ["table".to_string(), "cell".to_string()]);
    assert!(rows.iter().skip(1).all(|r| r.len() == 8));
    assert_eq!(rows.iter().filter(|r| r[7] == "fail").count(), failed.len());

    // table 1 has no failing cells
    let out = delaycert(&["reproduce-tables", "--table", "1"]);
    assert!(out.status.success());
}

#[test]
fn simulate_writes_every_node() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.csv");
    let out = delaycert(&["--example", "ex1", "--step", "0.1", "--horizon", "50", "--out", path.to_str().unwrap(), "simulate"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&path);
    assert_eq!(rows[0], ["t", "x_1", "norm", "V"]);
    assert_eq!(rows.len(), 502);
    let t: f64 = rows[501][0].parse().unwrap();
    assert!((t - 50.0).abs() < 1e-9);
    // 17 significant digits
    assert!(rows[1][1].contains("e"), "{}", rows[1][1]);
    assert_eq!(rows[1][1].split('e').next().unwrap().replace(['-', '.'], "").len(), 17);
}

#[test]
fn compare_reports_and_writes_figure_data() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fig.csv");
    let out = delaycert(&["--example", "ex2", "--horizon", "500", "--out", path.to_str().unwrap(), "compare"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert!(v["worst_ratio_razumikhin"].as_f64().unwrap() <= 1.0);
    assert!(v["krasovskii_identity"].as_f64().unwrap().abs() < 1e-9);
    let rows = csv_rows(&path);
    assert_eq!(rows[0], ["t", "norm", "LR", "LK"]);
    for r in &rows[1..] {
        let x: Vec<f64> = r.iter().map(|s| s.parse().unwrap()).collect();
        assert!(x[1] <= x[2] && x[1] <= x[3]);
    }
}

#[test]
fn config_document_drives_a_custom_system() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    // x' = -2 x^3 + 0.5 y^3 with V = x^2
    std::fs::write(
        &cfg,
        r#"{
          "system": {
            "n": 1, "mu": 3, "h": 2.0,
            "terms": [
              {"target": 0, "coeff": -2.0, "x_exponents": [3], "y_exponents": [0]},
              {"target": 0, "coeff": 0.5, "x_exponents": [0], "y_exponents": [3]}
            ],
            "lyapunov": {"gamma": 2, "k0": 1, "k1": 1, "k2": 2, "k3": 2, "w": 3,
                         "terms": [{"coeff": 1.0, "exponents": [2]}]}
          },
          "delta": 0.05,
          "history": {"constant": [0.01]},
          "horizon": 200
        }"#,
    )
    .unwrap();
    let c = cfg.to_str().unwrap();
    let region = delaycert(&["--config", c, "region"]);
    assert!(region.status.success(), "{}", String::from_utf8_lossy(&region.stderr));
    assert!(json(&region)["razumikhin"]["Delta"].as_f64().unwrap() > 0.0);
    let cmp = delaycert(&["--config", c, "compare"]);
    assert!(cmp.status.success(), "{}", String::from_utf8_lossy(&cmp.stderr));
    assert!(json(&cmp).get("example").is_none());
}

#[test]
fn tune_is_reproducible() {
    let args = ["--example", "ex1", "tune", "--method", "razumikhin", "--budget", "300", "--seed", "9"];
    let a = delaycert(&args);
    let b = delaycert(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert!(json(&a)["delta"].as_f64().unwrap() > 0.0);
}

#[test]
fn bad_input_is_reported() {
    let out = delaycert(&["--example", "ex9", "region"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ex9"));
    let out = delaycert(&["--example", "ex1", "tune", "--method", "newton"]);
    assert_eq!(out.status.code(), Some(2));
}
