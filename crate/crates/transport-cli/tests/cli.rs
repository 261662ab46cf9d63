//! End-to-end checks of the binary: exit codes, validation output, and
//! byte-identical reruns.

use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_transport-lab"))
}

fn sample_config(dir: &std::path::Path, noise: bool, dt: f64) -> std::path::PathBuf {
    let path = dir.join("config.json");
    std::fs::write(
        &path,
        format!(
            r#"{{
        "schema_version": 1,
        "problem": {{
            "domain": {{"kind": "interval", "a": 0.0, "b": 1.0}},
            "field": {{"name": "constant", "velocity": [1.0]}},
            "data": {{
                "u0": {{"kind": "linear", "coeffs": [1.0], "offset": 0.0}},
                "ub": {{"kind": "constant", "value": 0.0}}
            }},
            "horizon": 0.5,
            "noise": {noise}
        }},
        "numerics": {{"dt": {dt}, "n_paths": 30, "master_seed": 7, "times": [0.5]}}
    }}"#
        ),
    )
    .unwrap();
    path
}

#[test]
fn validate_accepts_well_formed_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = sample_config(tmp.path(), true, 0.01);
    let out = bin().args(["validate", "--config"]).arg(&cfg).output().unwrap();
    assert!(out.status.success(), "{out:?}");
    assert!(String::from_utf8_lossy(&out.stdout).contains("ok"));
}

#[test]
fn validate_itemizes_bad_dt_with_exit_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = sample_config(tmp.path(), true, 0.0013);
    let out = bin().args(["validate", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stdout).contains("numerics.dt"));
}

#[test]
fn solve_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = sample_config(tmp.path(), true, 0.01);
    for sub in ["a", "b"] {
        let out = bin()
            .args(["solve", "--config"])
            .arg(&cfg)
            .args(["--out"])
            .arg(tmp.path().join(sub))
            .arg("--quiet")
            .output()
            .unwrap();
        assert!(out.status.success(), "{out:?}");
    }
    let a = std::fs::read(tmp.path().join("a/field.csv")).unwrap();
    let b = std::fs::read(tmp.path().join("b/field.csv")).unwrap();
    assert_eq!(a, b);
    let ma: serde_json::Value =
        serde_json::from_slice(&std::fs::read(tmp.path().join("a/manifest.json")).unwrap()).unwrap();
    let mb: serde_json::Value =
        serde_json::from_slice(&std::fs::read(tmp.path().join("b/manifest.json")).unwrap()).unwrap();
    assert_eq!(ma["checksum_sha256"], mb["checksum_sha256"]);
}

#[test]
fn seed_override_changes_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = sample_config(tmp.path(), true, 0.01);
    for (sub, seed) in [("s1", "7"), ("s2", "8")] {
        let out = bin()
            .args(["solve", "--config"])
            .arg(&cfg)
            .args(["--out"])
            .arg(tmp.path().join(sub))
            .args(["--seed", seed, "--quiet"])
            .output()
            .unwrap();
        assert!(out.status.success());
    }
    let a = std::fs::read(tmp.path().join("s1/field.csv")).unwrap();
    let b = std::fs::read(tmp.path().join("s2/field.csv")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn convergence_on_noisy_problem_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = sample_config(tmp.path(), true, 0.01);
    let out = bin()
        .args(["convergence", "--config"])
        .arg(&cfg)
        .args(["--out"])
        .arg(tmp.path().join("c"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn hypothesis_runs_clean() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = sample_config(tmp.path(), true, 0.01);
    let out = bin()
        .args(["hypothesis", "--config"])
        .arg(&cfg)
        .args(["--out"])
        .arg(tmp.path().join("h"))
        .arg("--quiet")
        .output()
        .unwrap();
    assert!(out.status.success(), "{out:?}");
    assert!(tmp.path().join("h/hypothesis.csv").exists());
}
