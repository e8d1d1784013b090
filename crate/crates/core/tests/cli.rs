mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use common::*;
use resnet_lab::generator::{generate, perturb_identity};
use resnet_lab::io::save_weights;
use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_resnet-lab")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_config(dir: &TempDir) -> PathBuf {
    let mut cfg = serde_json::to_value(convergent_config()).unwrap();
    cfg["spec"]["n"] = 40.into();
    let path = dir.path().join("cfg.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    path
}

fn gen(dir: &TempDir) -> PathBuf {
    let cfg = small_config(dir);
    let out = dir.path().join("w.json");
    let o = run(&["gen", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn gen_verify_diagnose_round_trip() {
    let dir = TempDir::new().unwrap();
    let w = gen(&dir);
    assert!(dir.path().join("w.json.manifest.json").exists());

    let o = run(&["verify", "--weights", s(&w), "--trials", "20"]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("explicit-vs-recursive"));
    assert!(text.contains("sampling-embedding"));

    let csv = dir.path().join("d.csv");
    let o = run(&["diagnose", "--weights", s(&w), "--out-csv", s(&csv), "--depths", "0:40:4"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let body = std::fs::read_to_string(&csv).unwrap();
    let mut lines = body.lines();
    assert_eq!(lines.next(), Some("depth,S1,S2,productBound,tail"));
    assert_eq!(lines.count(), 11);

    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("d.report.json")).unwrap()).unwrap();
    assert!(report["verdict"].is_string());
    let manifest = report["manifest"].as_str().unwrap();
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(manifest).unwrap()).unwrap();
    assert_eq!(m["command"], "diagnose");
    assert_eq!(m["outputs"].as_array().unwrap().len(), 2);
}

#[test]
fn identity_fixture_verifies_exactly_and_diagnoses_to_zero() {
    let dir = TempDir::new().unwrap();
    let base = generate(&convergent_config()).unwrap();
    let path = dir.path().join("id.json");
    save_weights(&perturb_identity(&base, 0.0, 1.0).unwrap(), &path).unwrap();

    let o = run(&["verify", "--weights", s(&path), "--trials", "10"]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    assert_eq!(text.matches("max_dev=0.000e0").count(), 2, "{text}");

    let csv = dir.path().join("id.csv");
    let o = run(&["diagnose", "--weights", s(&path), "--out-csv", s(&csv), "--depths", "0,10,100,400"]);
    assert!(o.status.success());
    for line in std::fs::read_to_string(&csv).unwrap().lines().skip(1) {
        let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!((cols[1], cols[2], cols[3], cols[4]), (0.0, 0.0, 1.0, 0.0), "{line}");
    }
}

#[test]
fn conv_weights_run_all_suites() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("conv.json");
    std::fs::write(&cfg, serde_json::to_string(&conv_config(6, 1)).unwrap()).unwrap();
    let w = dir.path().join("w.json");
    assert!(run(&["gen", "--config", s(&cfg), "--out", s(&w)]).status.success());
    let traces = dir.path().join("t.json");
    let o = run(&["verify", "--weights", s(&w), "--trials", "5", "--trace-out", s(&traces)]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("conv-vs-matrix") && text.contains("layer-toeplitz"));
    let t: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&traces).unwrap()).unwrap();
    assert_eq!(t.as_array().unwrap().len(), 5);
    assert_eq!(t[0]["trace"]["blocks"].as_array().unwrap().len(), 7);
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"spec\": ").unwrap();
    let out = dir.path().join("x.json");
    assert_eq!(run(&["gen", "--config", s(&bad), "--out", s(&out)]).status.code(), Some(2));

    let w = gen(&dir);
    let csv = dir.path().join("d.csv");
    assert_eq!(run(&["diagnose", "--weights", s(&w), "--out-csv", s(&csv), "--p", "0.5"]).status.code(), Some(2));
    assert_eq!(run(&["diagnose", "--weights", s(&w), "--out-csv", s(&csv), "--depths", "5,3"]).status.code(), Some(2));
    assert_eq!(run(&["diagnose", "--weights", s(&w), "--out-csv", s(&csv), "--depths", "0:999"]).status.code(), Some(2));
    assert_eq!(run(&["diagnose", "--weights", s(&w), "--out-csv", s(&csv), "--p", "inf"]).status.code(), Some(0));

    // Corrupt one weight shape: drop the first row of the output matrix.
    let text = std::fs::read_to_string(&w).unwrap();
    let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    doc["output"]["w"].as_array_mut().unwrap().remove(0);
    let broken = dir.path().join("broken.json");
    std::fs::write(&broken, doc.to_string()).unwrap();
    assert_eq!(run(&["verify", "--weights", s(&broken)]).status.code(), Some(3));
    assert_eq!(run(&["diagnose", "--weights", s(&broken), "--out-csv", s(&csv)]).status.code(), Some(3));
    assert_eq!(run(&["verify", "--weights", s(&dir.path().join("missing.json"))]).status.code(), Some(3));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(&dir);
    let mut files = Vec::new();
    for tag in ["a", "b"] {
        let w = dir.path().join(format!("w{tag}.json"));
        let csv = dir.path().join(format!("d{tag}.csv"));
        assert!(run(&["gen", "--config", s(&cfg), "--out", s(&w)]).status.success());
        assert!(run(&["diagnose", "--weights", s(&w), "--out-csv", s(&csv), "--seed", "9"]).status.success());
        files.push((std::fs::read(&w).unwrap(), std::fs::read(&csv).unwrap()));
    }
    assert_eq!(files[0], files[1]);
}
