use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn batchts(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_batchts"))
        .args(args)
        .output()
        .unwrap()
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn run_writes_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"policy": {"variant": "b-ts-beta"}, "env": {"kind": "bernoulli", "arms": 10}, "horizon": 1000, "runs": 2}"#,
    );
    let out = dir.path().join("out");
    let o = batchts(&["run", &cfg, "--seed", "7", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("b-ts-beta: runs=2"), "{stdout}");
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    let last = summary.lines().last().unwrap();
    assert!(last.starts_with("1000,"));
    let batches: f64 = last.rsplit(',').next().unwrap().parse().unwrap();
    assert!(batches <= 100.0);
}

#[test]
fn compare_names_files_by_policy() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cmp");
    let cfg = configs().join("bernoulli_compare.json");
    let o = batchts(&[
        "compare",
        cfg.to_str().unwrap(),
        "--runs",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for name in ["b-ts-beta", "ts-beta", "ucb1", "static-ts", "static-ts-4"] {
        assert!(out.join(format!("summary_{name}.csv")).exists(), "{name}");
    }
}

#[test]
fn sweep_and_check_succeed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"policy": {"variant": "b-mots"}, "env": {"kind": "gaussian", "arms": 3}, "horizon": 500, "runs": 2,
            "sweep": {"param": "horizon", "values": [100, 200, 400]}}"#,
    );
    let out = dir.path().to_str().unwrap();
    let o = batchts(&["sweep", &cfg, "--out", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("R^2"));
    assert_eq!(
        fs::read_to_string(dir.path().join("sweep.csv"))
            .unwrap()
            .lines()
            .count(),
        4
    );

    let o = batchts(&["check", &cfg, "--out", out]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(String::from_utf8_lossy(&o.stdout).contains("0 violations"));
}

#[test]
fn shipped_configs_parse() {
    for entry in fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        batchts_core::ExperimentConfig::from_path(&path)
            .unwrap_or_else(|e| panic!("{}: {e}", path.display()))
            .validate()
            .unwrap();
    }
}

#[test]
fn bad_input_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"policy": {"variant": "b-mots", "rho": 1.5}, "env": {"kind": "gaussian", "arms": 3}, "horizon": 10}"#,
    );
    let o = batchts(&["run", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("rho"));

    let o = batchts(&["run", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!batchts(&["frobnicate"]).status.success());
}
