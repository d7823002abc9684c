use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(dir: &Path, args: &[&str], config: &str) -> Output {
    let cfg = dir.join("cfg.json");
    std::fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_maslov-wave"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .output()
        .unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const QUARTER: &str = r#"{"params": {"a": 0.25, "gamma": 1.0, "eps": 1e-4}}"#;

#[test]
fn maslov_ledger_and_determinism() {
    let d = tempfile::tempdir().unwrap();
    let o1 = d.path().join("a");
    let o2 = d.path().join("b");
    let r1 = run(d.path(), &["maslov", "--out", o1.to_str().unwrap()], QUARTER);
    assert!(r1.status.success(), "{}", String::from_utf8_lossy(&r1.stderr));
    let r2 = run(d.path(), &["maslov", "--out", o2.to_str().unwrap()], QUARTER);
    assert!(r2.status.success());
    let v: Value = serde_json::from_slice(&r1.stdout).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["result"]["total"], 0);
    let signs: Vec<i64> = v["result"]["entries"].as_array().unwrap().iter().map(|e| e["sign"].as_i64().unwrap()).collect();
    assert_eq!(signs, vec![-1, 1, -1]);
    assert_eq!(v["result"]["endpoint"]["n_plus"], 1);
    assert!(v["config"]["params"]["a"].as_f64().unwrap() == 0.25);
    // outputs differ only through the --out path embedded in the config
    let a = std::fs::read_to_string(o1.join("beta.csv")).unwrap().replace(o1.to_str().unwrap(), "X");
    let b = std::fs::read_to_string(o2.join("beta.csv")).unwrap().replace(o2.to_str().unwrap(), "X");
    assert_eq!(a, b);
    let a = std::fs::read_to_string(o1.join("ledger.json")).unwrap().replace(o1.to_str().unwrap(), "X");
    let b = std::fs::read_to_string(o2.join("ledger.json")).unwrap().replace(o2.to_str().unwrap(), "X");
    assert_eq!(a, b);
    let csv = std::fs::read_to_string(o1.join("beta.csv")).unwrap();
    assert_eq!(csv.lines().nth(1).unwrap(), "z,beta,u,segment");
    let m = json(&o1.join("manifest.json"));
    assert_eq!(m["result"]["artifacts"].as_array().unwrap().len(), 2);
}

#[test]
fn invalid_a_fails() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("o");
    let r = run(d.path(), &["maslov", "--a", "0.7", "--out", out.to_str().unwrap()], QUARTER);
    assert!(!r.status.success());
    let e: Value = serde_json::from_slice(r.stderr.trim_ascii()).unwrap();
    assert!(e["error"].as_str().unwrap().contains("a = 0.7"));
}

#[test]
fn unknown_config_key_fails() {
    let d = tempfile::tempdir().unwrap();
    let r = run(d.path(), &["corners"], r#"{"params": {"alpha": 1}}"#);
    assert!(!r.status.success());
}

#[test]
fn singular_constants() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("o");
    let r = run(d.path(), &["singular-orbit", "--out", out.to_str().unwrap()], QUARTER);
    assert!(r.status.success());
    let v = json(&out.join("constants.json"));
    let c = &v["result"];
    assert!((c["c_star"].as_f64().unwrap() + 0.353553).abs() < 1e-6);
    assert!((c["u_star"].as_f64().unwrap() - 5.0 / 6.0).abs() < 1e-15);
    assert!((c["k"].as_f64().unwrap() - 4.442883).abs() < 1e-6);
    let csv = std::fs::read_to_string(out.join("orbit.csv")).unwrap();
    assert_eq!(csv.lines().nth(1).unwrap(), "segment,s,u,v,w,y");
}

#[test]
fn corners_report() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("o");
    let r = run(d.path(), &["corners", "--out", out.to_str().unwrap()], r#"{"corners": {"points": 7}}"#);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let v = json(&out.join("corners.json"));
    assert_eq!(v["result"]["corner_p"].as_array().unwrap().len(), 7);
    assert_eq!(v["result"]["corner_q"].as_array().unwrap().len(), 21);
    assert_eq!(v["result"]["shayman"].as_array().unwrap().len(), 3);
}

#[test]
fn scan_and_pde_at_moderate_eps() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("s");
    let cfg = r#"{"params": {"eps": 5e-4}, "scan": {"points": 6}, "pde": {"t_end": 20.0, "dx": 0.25}}"#;
    let r = run(d.path(), &["spectrum-scan", "--out", out.to_str().unwrap()], cfg);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    assert_eq!(json(&out.join("scan.json"))["result"]["sign_changes"], 0);
    let out = d.path().join("p");
    let r = run(d.path(), &["pde-sim", "--out", out.to_str().unwrap()], cfg);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let v = json(&out.join("pde.json"));
    assert_eq!(v["result"]["runs"].as_array().unwrap().len(), 3);
    let csv = std::fs::read_to_string(out.join("decay_bump.csv")).unwrap();
    assert_eq!(csv.lines().nth(1).unwrap(), "t,d,k,max_u");
}

#[test]
fn solve_wave_reports_unreachable_eps() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("o");
    let r = run(d.path(), &["solve-wave", "--out", out.to_str().unwrap()], r#"{"params": {"eps_list": [1e-3, 5e-4]}}"#);
    assert_eq!(r.status.code(), Some(2));
    let v = json(&out.join("speeds.json"));
    let e = v["result"]["entries"].as_array().unwrap();
    assert!(e[0]["error"].as_str().unwrap().contains("turns back"));
    assert!(e[1]["c"].as_f64().unwrap() < 0.0);
}
