use std::process::{Command, Output};

use serde_json::Value;

fn bergman(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bergman")).args(args).output().expect("spawn bergman")
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn index_gaussian_report() {
    let v = json(&bergman(&["index", "--weight", "gaussian_c:c=1", "--disc", "r=1", "--p", "2"]));
    assert_eq!(v["schema"], 1);
    assert_eq!(v["command"], "index");
    let index = v["result"]["index"].as_f64().unwrap();
    assert!((index - 0.6321205588285577).abs() < 1e-10);
    assert_eq!(v["config"]["weight"], "gaussian_c:c=1");
    assert_eq!(v["result"]["coefficients"][0], serde_json::json!([1.0, 0.0]));
}

#[test]
fn index_for_metric_with_fiber() {
    let v = json(&bergman(&["index", "--metric", "flat_exp", "--fiber", "1,0;0,1", "--disc", "r=0.5"]));
    assert!((v["result"]["index"].as_f64().unwrap() - 1.0).abs() < 1e-8);
    assert_eq!(v["config"]["point"], serde_json::json!([[1.0, 0.0], [0.0, 1.0]]));
}

#[test]
fn classify_examples() {
    let v = json(&bergman(&["classify", "--weight", "re_quadratic", "--region", "box=1", "--gamma", "0.2"]));
    assert_eq!(v["result"]["verdict"], "pluriharmonic");
    let v = json(&bergman(&["classify", "--weight", "gaussian_c:c=-1", "--region", "box=1", "--gamma", "0.2"]));
    assert_eq!(v["result"]["verdict"], "not-psh");
    let v = json(&bergman(&["classify", "--disc-harmonic", "--weight", "gaussian_c:c=1"]));
    assert_eq!(v["result"]["verdict"], "not-harmonic-on-disc");
    let v = json(&bergman(&["classify", "--disc-harmonic", "--weight", "re_linear"]));
    assert_eq!(v["result"]["verdict"], "harmonic-on-disc");
}

#[test]
fn disc_test_rejects_non_subharmonic_weight() {
    let out = bergman(&["classify", "--disc-harmonic", "--weight", "gaussian_c:c=-1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sub-mean-value"));
}

#[test]
fn curvature_examples() {
    let v = json(&bergman(&["curvature", "--metric", "rank1_gaussian:c=1", "--levels", "5"]));
    assert!((v["result"]["c_est"].as_f64().unwrap() - 1.0).abs() <= 5e-3);
    assert_eq!(v["result"]["levels"].as_array().unwrap().len(), 5);
    let v = json(&bergman(&["curvature", "--metric", "rank1_gaussian:c=-1"]));
    assert!((v["result"]["c_est"].as_f64().unwrap() + 1.0).abs() <= 5e-3);
    let v = json(&bergman(&["curvature", "--metric", "constant"]));
    assert!(v["result"]["c_est"].as_f64().unwrap().abs() <= 1e-4);
}

#[test]
fn flat_command_emits_frame() {
    let v = json(&bergman(&["flat", "--metric", "constant", "--grid", "2"]));
    assert_eq!(v["result"]["flatness"]["verdict"], "flat");
    let frame = &v["result"]["frame"];
    assert_eq!(frame["residuals"]["unitarity"].as_f64().unwrap(), 0.0);
    assert_eq!(frame["values"][7], frame["base_factor"][0]);
}

#[test]
fn flat_command_on_curved_metric_exits_four() {
    let out = bergman(&["flat", "--metric", "scaled_gaussian", "--grid", "2"]);
    assert_eq!(out.status.code(), Some(4));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["result"]["flatness"]["verdict"], "not-flat");
    assert!(v["result"]["non_flat_evidence"]["path"].as_f64().unwrap() > 1e-8);
    assert!(String::from_utf8_lossy(&out.stderr).contains("non-flat evidence"));
}

#[test]
fn lp_trace_as_csv() {
    let out = bergman(&["lp", "--weight", "gaussian_c:c=1", "--p", "1", "--format", "csv"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("k,objective,bound"));
    for line in lines {
        let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert!(cols[1] <= cols[2] * (1.0 + 1e-8));
    }
}

#[test]
fn exit_codes() {
    assert_eq!(bergman(&["index", "--weight", "nope"]).status.code(), Some(2));
    assert_eq!(bergman(&["index", "--weight", "constant", "--disc", "r=0"]).status.code(), Some(2));
    assert_eq!(bergman(&["index", "--weight", "constant", "--format", "xml"]).status.code(), Some(2));
    assert_eq!(bergman(&["index", "--weight", "log_norm", "--disc", "r=1"]).status.code(), Some(3));
    assert_eq!(bergman(&["index", "--weight", "constant", "--degree", "40", "--order", "2"]).status.code(), Some(3));
}

#[test]
fn out_flag_writes_the_report() {
    let path = std::env::temp_dir().join(format!("bergman-report-{}.json", std::process::id()));
    let p = path.to_str().unwrap();
    let out = bergman(&["index", "--weight", "constant", "--out", p]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["config"]["out"], p);
    std::fs::remove_file(&path).unwrap();
}

#[test]
fn same_seed_same_bytes() {
    let args = ["curvature", "--metric", "diag_gaussian", "--levels", "3", "--seed", "7"];
    let a = bergman(&args);
    let b = Command::new(env!("CARGO_BIN_EXE_bergman")).args(args).env("BERGMAN_THREADS", "1").output().unwrap();
    assert!(a.status.success() && b.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn bad_thread_count_is_ignored_with_warning() {
    let out = Command::new(env!("CARGO_BIN_EXE_bergman"))
        .args(["index", "--weight", "constant"])
        .env("BERGMAN_THREADS", "zero")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("BERGMAN_THREADS"));
}

#[test]
fn help_lists_every_flag() {
    let out = bergman(&["index", "--help"]);
    let text = String::from_utf8(out.stdout).unwrap();
    for flag in
        ["--weight", "--metric", "--disc", "--cylinder", "--p", "--degree", "--order", "--seed", "--out", "--format"]
    {
        assert!(text.contains(flag), "{flag}");
    }
    let out = bergman(&["flat", "--help"]);
    let text = String::from_utf8(out.stdout).unwrap();
    for flag in ["--region", "--gamma", "--grid", "--tol", "--res", "--ode-tol"] {
        assert!(text.contains(flag), "{flag}");
    }
}
