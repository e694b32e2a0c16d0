//! End-to-end tests of the binary: JSON on stdout, exit-code contract,
//! determinism across runs.

use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_haarint"))
}

fn run_ok(args: &[&str]) -> serde_json::Value {
    let out = bin().args(args).output().expect("binary runs");
    assert!(
        out.status.success(),
        "command {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is a single JSON document")
}

#[test]
fn moment_of_column_norm_is_one() {
    let dir = tempdir();
    let poly = dir.join("u2.json");
    std::fs::write(
        &poly,
        r#"{"layout":{"beta":1,"n":4,"k":2},"terms":[
            {"m":{"0":2},"c":"1"},{"m":{"1":2},"c":"1"},
            {"m":{"2":2},"c":"1"},{"m":{"3":2},"c":"1"}]}"#,
    )
    .unwrap();
    let v = run_ok(&["moment", "--beta", "1", "--n", "4", "--k", "2", "--poly", poly.to_str().unwrap()]);
    assert_eq!(v["exact"], "1");
    // all engines agree
    for engine in ["codim2", "clifford", "recursion"] {
        let v = run_ok(&[
            "moment", "--beta", "1", "--n", "4", "--k", "2",
            "--poly", poly.to_str().unwrap(), "--engine", engine,
        ]);
        assert_eq!(v["exact"], "1", "engine {engine}");
    }
}

#[test]
fn check_suites_pass_and_report() {
    let v = run_ok(&[
        "check", "prop43", "--beta", "2", "--n", "3", "--k", "2", "--trials", "10", "--seed", "7",
    ]);
    assert_eq!(v["passed"], true);
    let v = run_ok(&["check", "sekiguchi", "--amax", "3"]);
    assert_eq!(v["passed"], true);
    let v = run_ok(&["check", "commutators", "--beta", "4", "--n", "2", "--trials", "4"]);
    assert_eq!(v["passed"], true);
}

#[test]
fn iz_normalization_and_mc_field() {
    let v = run_ok(&["iz", "--H", "0,0,0,0"]);
    assert_eq!(v["value"], 1.0);
    assert_eq!(v["convention"], "from_zero");
    let v = run_ok(&["iz", "--H", "0.1,0.1,0.1,0.1", "--jmax", "30", "--mc-check", "20000,5"]);
    let val = v["value"].as_f64().unwrap();
    assert!((val - (-0.4f64).exp()).abs() < 1e-6);
    assert!(v["mc"]["stderr"].as_f64().unwrap() > 0.0);
}

#[test]
fn kernel_subcommand_reports_beta4_normalization() {
    let v = run_ok(&["kernel", "--beta", "4", "--n", "3", "--m", "1", "--lambdas", "0.5,1.0"]);
    assert!(v["value"].as_f64().unwrap() > 0.0);
    assert!(v["normalization"]["pinned"].is_string());
    let v2 = run_ok(&["kernel", "--beta", "2", "--n", "3", "--m", "1", "--lambdas", "0.5,1.0", "--moment-degree", "6"]);
    let series = v2["moment_check"]["series"].as_f64().unwrap();
    let kernel = v2["moment_check"]["kernel"].as_f64().unwrap();
    let tail = v2["moment_check"]["tail_bound"].as_f64().unwrap();
    assert!((series - kernel).abs() <= tail);
}

#[test]
fn oracle_is_deterministic_across_runs_and_thread_counts() {
    let dir = tempdir();
    let poly = dir.join("x2.json");
    std::fs::write(&poly, r#"{"layout":{"beta":1,"n":5,"k":1},"terms":[{"m":{"0":2},"c":"1"}]}"#)
        .unwrap();
    let args = [
        "oracle", "--beta", "1", "--n", "5", "--k", "1",
        "--poly", poly.to_str().unwrap(), "--samples", "20000", "--seed", "11",
    ];
    let a = bin().args(args).output().unwrap();
    let b = bin().args(args).args(["--threads", "1"]).output().unwrap();
    assert_eq!(a.stdout, b.stdout, "MC output must not depend on thread count");
    let v: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert!((v["mean"].as_f64().unwrap() - 0.2).abs() < 4.0 * v["stderr"].as_f64().unwrap());
    // quadrature oracle
    let q = run_ok(&[
        "oracle", "--kind", "quadrature", "--beta", "1", "--n", "2", "--k", "2",
        "--poly", write_so2_poly(&dir).to_str().unwrap(), "--nodes", "64",
    ]);
    assert!((q["value"].as_f64().unwrap() - 0.5).abs() < 1e-10);
}

#[test]
fn sample_emits_orthonormal_frames() {
    let v = run_ok(&["sample", "--beta", "2", "--n", "3", "--k", "2", "--count", "2", "--seed", "3"]);
    let samples = v["samples"].as_array().unwrap();
    assert_eq!(samples.len(), 2);
    assert_eq!(samples[0].as_array().unwrap().len(), 2 * 3 * 2);
}

#[test]
fn exit_codes() {
    // flag errors: 2
    let out = bin().args(["moment", "--beta", "9", "--n", "4", "--k", "2", "--poly", "/nonexistent"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    let out = bin().args(["definitely-not-a-command"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    // diagnostics live on stderr only
    let out = bin()
        .args(["moment", "--beta", "1", "--n", "4", "--k", "2", "--poly", "/nonexistent.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    assert!(!out.stderr.is_empty());
}

fn tempdir() -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("haarint-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_so2_poly(dir: &std::path::Path) -> std::path::PathBuf {
    // u1 v2 over the SO(2) layout
    let p = dir.join("u1v2.json");
    std::fs::write(&p, r#"{"layout":{"beta":1,"n":2,"k":2},"terms":[{"m":{"0":1,"3":1},"c":"1"}]}"#)
        .unwrap();
    p
}
