use std::path::Path;
use std::process::{Command, Output};

use utfm::synthgen::NetworkConfig;
use utfm::utfm::AssessmentReport;

fn utfm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_utfm"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "info")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = utfm(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn error_line(out: &Output) -> serde_json::Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().unwrap();
    serde_json::from_str(line).unwrap_or_else(|_| panic!("not a JSON error line: {line}"))
}

fn trained_dir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(p, &["gen", "--n", "1500", "--seed", "42", "--output", "legs.csv"]);
    ok(p, &["train", "--input", "legs.csv", "--max-iter", "30", "--output", "model.json"]);
    dir
}

#[test]
fn pipeline_runs_end_to_end_in_both_modes() {
    let dir = trained_dir();
    let p = dir.path();
    assert!(p.join("model.log.json").exists());
    for mode in ["log-sum-exp", "raw-prob-sum"] {
        let out = ok(
            p,
            &["decode", "--model", "model.json", "--input", "legs.csv", "--flight-id", "F1", "--mode", mode, "--output", "r.json"],
        );
        let summary = String::from_utf8_lossy(&out.stdout);
        assert!(summary.starts_with(&format!("flight F1 ({mode})")), "{summary}");
        let report: AssessmentReport = serde_json::from_slice(&std::fs::read(p.join("r.json")).unwrap()).unwrap();
        for ph in &report.phases {
            for g in [ph.schedule(), ph.decision(), ph.outcome()] {
                assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
        ok(p, &["export", "--input", "r.json", "--output", "r.dot"]);
        let dot = std::fs::read_to_string(p.join("r.dot")).unwrap();
        assert_eq!(dot.matches(" -> ").count(), 17);
    }
}

#[test]
fn logs_carry_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["gen", "--n", "50", "--seed", "9", "--output", "legs.csv"]);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("provenance artifact=legs.csv seed=9 config_sha256="), "{stderr}");
    let out = ok(dir.path(), &["prepare", "--input", "legs.csv", "--output", "split.json"]);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("input_sha256=") && !stderr.contains("input_sha256=-"), "{stderr}");
}

#[test]
fn commands_are_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    for name in ["a", "b"] {
        ok(p, &["gen", "--n", "400", "--seed", "3", "--output", &format!("{name}.csv")]);
        ok(p, &["prepare", "--input", &format!("{name}.csv"), "--output", &format!("{name}.json")]);
    }
    let read = |f: &str| std::fs::read(p.join(f)).unwrap();
    assert_eq!(read("a.csv"), read("b.csv"));
    let manifest: serde_json::Value = serde_json::from_slice(&read("a.json")).unwrap();
    assert_eq!(manifest["seed"], 42);
    assert_eq!(read("a.json"), read("b.json"));
}

#[test]
fn cross_validation_of_one_component() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(p, &["gen", "--n", "800", "--output", "legs.csv"]);
    let out = ok(
        p,
        &["cv", "--input", "legs.csv", "--component", "TAS->TAD", "--max-iter", "30", "--output", "cv.json"],
    );
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("TAS->TAD"));
    let cv: serde_json::Value = serde_json::from_slice(&std::fs::read(p.join("cv.json")).unwrap()).unwrap();
    assert_eq!(cv.as_array().unwrap().len(), 1);
    assert_eq!(cv[0]["report"]["folds"].as_array().unwrap().len(), 5);

    let out = utfm(p, &["cv", "--input", "legs.csv", "--component", "XYZ", "--output", "cv.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(error_line(&out)["message"].as_str().unwrap().contains("XYZ"));
}

#[test]
fn training_without_disruptions_names_the_failing_hmm() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let config = NetworkConfig {
        disruption_rate: 0.0,
        ..NetworkConfig::default()
    };
    std::fs::write(p.join("net.toml"), config.to_toml_string()).unwrap();
    ok(p, &["gen", "--n", "300", "--config", "net.toml", "--output", "legs.csv"]);
    let out = utfm(p, &["train", "--input", "legs.csv", "--output", "model.json"]);
    assert_eq!(out.status.code(), Some(1));
    let err = error_line(&out);
    assert_eq!(err["command"], "train");
    assert!(err["message"].as_str().unwrap().contains("TAD"), "{err}");
    assert!(!p.join("model.json").exists());
}

#[test]
fn bad_inputs_exit_one_with_a_single_line() {
    let dir = trained_dir();
    let p = dir.path();
    let out = utfm(p, &["decode", "--model", "model.json", "--input", "legs.csv", "--flight-id", "F99999", "--output", "r.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(error_line(&out)["message"].as_str().unwrap().contains("F99999"));

    std::fs::write(p.join("half.json"), &std::fs::read(p.join("model.json")).unwrap()[..1000]).unwrap();
    let out = utfm(p, &["decode", "--model", "half.json", "--input", "legs.csv", "--flight-id", "F1", "--output", "r.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_line(&out)["command"], "decode");

    let out = utfm(p, &["export", "--input", "legs.csv", "--output", "x.dot"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(String::from_utf8_lossy(&out.stderr).lines().count(), 1);

    let out = utfm(p, &["train", "--input", "missing.csv", "--output", "m.json"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(utfm(dir.path(), &["gen", "--bogus"]).status.code(), Some(2));
    assert_eq!(utfm(dir.path(), &["decode", "--mode", "softmax"]).status.code(), Some(2));
    assert_eq!(utfm(dir.path(), &["frobnicate"]).status.code(), Some(2));
}
