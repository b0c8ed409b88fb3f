use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("wlrseq-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wlrseq")).args(args).output().unwrap()
}

fn run_json(args: &[&str]) -> Value {
    let out = run(args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn assert_schema(value: &Value, schema: &str) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("schemas/{schema}.schema.json"));
    let schema: Value = serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap();
    let v = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = v.iter_errors(value).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{errors:?}");
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn two_subject_monitor_and_report() {
    let c = configs();
    let design = c.join("two_subject_design.json");
    let data = c.join("two_subject.csv");
    let m = run_json(&["monitor", "--config", s(&design), "--data", s(&data), "--analysis", "1", "--cutoff", "3"]);
    assert_schema(&m, "monitor");
    assert!((m["state"]["z"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(m["state"]["events"], 2);

    let r = run_json(&["report", "--config", s(&c.join("two_subject_report.json"))]);
    assert_schema(&r, "report");
    assert!((r["inference"]["p_value"].as_f64().unwrap() - 0.05).abs() < 1e-5);
}

#[test]
fn design_round_trips_through_monitor() {
    let dir = scratch("roundtrip");
    let doc = dir.join("design.json");
    let out = run(&["design", "--config", s(&configs().join("nlst_design.json")), "--out", s(&doc)]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let first: Value = serde_json::from_slice(&std::fs::read(&doc).unwrap()).unwrap();
    assert_schema(&first, "design");

    // a design document is accepted wherever a design configuration is
    let m = run_json(&[
        "monitor",
        "--design",
        s(&doc),
        "--data",
        s(&configs().join("two_subject.csv")),
        "--analysis",
        "6",
    ]);
    let z = m["efficacy_z"].as_f64().unwrap();
    let planned = first["schedule"][5]["efficacy_z"].as_f64().unwrap();
    assert!((z - planned).abs() < 1e-12, "{z} vs {planned}");
}

#[test]
fn infeasible_futility_exits_with_two() {
    let dir = scratch("infeasible");
    let cfg = dir.join("design.json");
    let body = json!({
        "alpha": 0.025,
        "spending": {"family": "o-brien-fleming"},
        "shape": "optimal-weight",
        "beta_star": -3.0,
        "n": 100,
        "fractions": [0.5, 1.0],
        "v_tau": 0.125,
        "m_tau": 0.125,
        "futility": {"beta": 0.1, "spending": {"family": "o-brien-fleming"}}
    });
    std::fs::write(&cfg, body.to_string()).unwrap();
    let out = run(&["design", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error: ") && err.contains("boundary"), "{err}");
}

#[test]
fn malformed_inputs_exit_with_one() {
    let dir = scratch("malformed");
    let csv = dir.join("bad.csv");
    std::fs::write(&csv, "id,time,event,arm\ns1,abc,1,1\n").unwrap();
    let design = configs().join("two_subject_design.json");
    let out = run(&["monitor", "--config", s(&design), "--data", s(&csv), "--analysis", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.csv"));

    let cfg = dir.join("design.json");
    std::fs::write(&cfg, r#"{"alpha": 0.05, "unknown": 1}"#).unwrap();
    assert_eq!(run(&["design", "--config", s(&cfg)]).status.code(), Some(1));
}

#[test]
fn projection_output_matches_schema() {
    let p = run_json(&["project", "--config", s(&configs().join("nlst_projection.json")), "--oracle"]);
    assert_schema(&p, "projection");
    assert!(p["oracle"]["rel_error_v"].as_f64().unwrap() < 1e-9);
    assert_eq!(p["theta_sweep"].as_array().unwrap().len(), 5);
}

#[test]
fn small_simulation_with_replicate_file() {
    let dir = scratch("simulate");
    let mut cfg: Value = serde_json::from_slice(&std::fs::read(configs().join("sim_alternative.json")).unwrap()).unwrap();
    cfg["scenario"]["replicates"] = json!(20);
    cfg["scenario"]["n_per_arm"] = json!(500);
    let path = dir.join("sim.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    let reps = dir.join("reps.csv");
    let a = run_json(&["simulate", "--config", s(&path), "--seed", "7", "--replicates-out", s(&reps)]);
    assert_schema(&a, "simulation");
    assert_eq!(a["scenario"]["master_seed"], 7);
    let rows = std::fs::read_to_string(&reps).unwrap();
    assert_eq!(rows.lines().count(), 21);
    let b = run_json(&["simulate", "--config", s(&path), "--seed", "7"]);
    assert_eq!(a["summary"], b["summary"]);
}

#[test]
fn pretty_prints_a_table() {
    let out = run(&["design", "--config", s(&configs().join("nlst_design.json")), "--pretty"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("alpha 0.05"), "{text}");
    assert_eq!(text.lines().filter(|l| l.trim_start().starts_with(char::is_numeric)).count(), 6);
}
