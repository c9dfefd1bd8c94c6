//! End-to-end runs of the `rwre-lab` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_rwre-lab"));
    c.env_remove("RWRE_LAB_OUT").env("RUST_LOG", "error");
    c
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text
        .lines()
        .rev()
        .find(|l| l.starts_with('{'))
        .expect("a JSON diagnostic on stderr");
    serde_json::from_str(line).unwrap()
}

const SMALL: &str = r#"{
  "schema_version": 1, "seed": 3, "limits": {"trials": 500},
  "law": {"variant": {"kind": "iid_continuous", "concentration": [3, 1, 1, 1]}, "params": {"d": 2, "kappa": 0.05}},
  "experiment": {"kind": "conditions",
    "conditions": [{"variant": {"kind": "stretch_t", "gamma": 0.5}, "direction": [1, 0]}],
    "grids": {"l_grid": [1, 2, 3], "n_grid": [20], "transience_trials": 20}}
}"#;

#[test]
fn dry_run_checks_without_simulating() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin()
        .current_dir(tmp.path())
        .args(["run", "--check"])
        .arg(config("drift_1d_hierarchy.json"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["status"], "ok");
    assert!(!tmp.path().join("rwre-out").exists());
}

#[test]
fn repeated_runs_give_identical_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "small.json", SMALL);
    let mut reports = Vec::new();
    for (i, jobs) in ["1", "1", "3"].iter().enumerate() {
        let dir = tmp.path().join(format!("out{i}"));
        let out = bin()
            .args(["run", "--config"])
            .arg(&cfg)
            .args(["--jobs", jobs, "--out"])
            .arg(&dir)
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        let manifest: Value = serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["jobs"], jobs.parse::<u64>().unwrap());
        assert!(dir.join("curve_0_stretch_t.csv").exists());
        reports.push(std::fs::read(dir.join("report.json")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
    assert_eq!(reports[0], reports[2]);
}

#[test]
fn seed_flag_and_output_variable_are_honoured() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "small.json", SMALL);
    let env_dir = tmp.path().join("from-env");
    let run = |seed: &str| {
        let out = bin()
            .env("RWRE_LAB_OUT", &env_dir)
            .args(["run", "--seed", seed])
            .arg(&cfg)
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0));
        let m: Value = serde_json::from_str(&std::fs::read_to_string(env_dir.join("manifest.json")).unwrap()).unwrap();
        (m["seed"].as_u64().unwrap(), m["report_hash"].as_str().unwrap().to_string())
    };
    let (s1, h1) = run("1");
    let (s2, h2) = run("2");
    assert_eq!((s1, s2), (1, 2));
    assert_ne!(h1, h2);
}

#[test]
fn full_constants_are_refused_with_a_runnable_suggestion() {
    let out = bin().arg("check").arg(config("cascade_full_constants_2d.json")).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    let diag = stderr_json(&out);
    assert_eq!(diag["kind"], "capacity");
    assert!(diag["message"].as_str().unwrap().contains("infeasible constants"));
    // the suggested hierarchy passes validation in place of the original
    let mut cfg: Value = serde_json::from_str(&std::fs::read_to_string(config("cascade_full_constants_2d.json")).unwrap()).unwrap();
    cfg["experiment"]["hierarchy"] = diag["suggestion"]["hierarchy"].clone();
    let tmp = tempfile::tempdir().unwrap();
    let path = write(tmp.path(), "scaled.json", &cfg.to_string());
    let out = bin().arg("check").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn config_errors_exit_with_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    let unknown = write(
        tmp.path(),
        "unknown.json",
        &SMALL.replace("\"seed\": 3", "\"seed\": 3, \"sede\": 4"),
    );
    let out = bin().arg("check").arg(&unknown).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_json(&out)["message"].as_str().unwrap().contains("sede"));
    let missing = bin().args(["run", "--config", "/nonexistent/config.json"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(2));
    assert_eq!(stderr_json(&missing)["kind"], "config");
}

#[test]
fn open_verdicts_exit_with_code_four() {
    let tmp = tempfile::tempdir().unwrap();
    // points beyond L = 1 see no backtracks at 200 trials, leaving too few to fit
    let cfg = write(
        tmp.path(),
        "open.json",
        &SMALL
            .replace("\"trials\": 500", "\"trials\": 200")
            .replace("[1, 2, 3]", "[1, 10, 20, 30]"),
    );
    let out = bin().arg("run").arg(&cfg).arg("--out").arg(tmp.path().join("o")).output().unwrap();
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(stderr_json(&out)["kind"], "indeterminate");
    assert!(tmp.path().join("o/report.json").exists());
}

#[test]
fn reproduce_and_list() {
    let out = bin().args(["reproduce", "A5"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("A5 PASS"));
    let bad = bin().args(["reproduce", "A42"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
    assert!(stderr_json(&bad)["message"].as_str().unwrap().contains("A1, A2, A3"));
    let list = bin().arg("list").output().unwrap();
    let text = String::from_utf8_lossy(&list.stdout);
    assert!(text.contains("cascade") && text.contains("A9"));
}
