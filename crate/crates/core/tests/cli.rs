//! End-to-end tests of the `cvp` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

use cvp::MetricSpace;

fn cvp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cvp")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn write_json(path: &Path, value: &Value) {
    fs::write(path, serde_json::to_vec_pretty(value).unwrap()).unwrap();
}

/// Integer grid `[lo, hi]` as a space file plus a tent-kernel config.
fn setup(dir: &Path, step: f64, lo: f64, count: usize, range: f64, radii: &[f64]) -> PathBuf {
    let space = MetricSpace::grid_1d(lo, step, count).unwrap();
    fs::write(dir.join("space.json"), serde_json::to_vec(&space.to_file()).unwrap()).unwrap();
    let config = json!({
        "space": "space.json",
        "kernel": { "kind": "tent", "amplitude": 1.0, "range": range },
        "profile": { "f": "tent", "params": { "amplitude": 10.0, "range": 1.5 }, "delta": 1.0 },
        "exhaustion": { "center": "0", "radii": radii },
        "checks": ["el", { "name": "minimality", "trials": 300 }],
        "output": "out",
        "seed": 5
    });
    let path = dir.join("config.json");
    write_json(&path, &config);
    path
}

fn identity_run(dir: &Path) -> PathBuf {
    let config = setup(dir, 1.0, -20.0, 41, 1.0, &[5.0, 10.0, 20.0]);
    let out = cvp(&["solve", "--config", config.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    dir.join("out/run.json")
}

fn read(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

#[test]
fn solve_writes_report_and_stage_tables() {
    let dir = tempfile::tempdir().unwrap();
    let run = identity_run(dir.path());
    let report = read(&run);
    let lambda: Vec<f64> = report["diagnostics"]["lambda"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert_eq!(lambda.len(), 3);
    for (l, n) in lambda.iter().zip([11.0, 21.0, 41.0]) {
        assert!((l - n).abs() < 1e-9);
    }
    assert_eq!(report["tool"], "cvp");
    assert_eq!(report["config_hash"].as_str().unwrap().len(), 64);
    assert!(report["config"].get("output").is_none());
    let csv = fs::read_to_string(dir.path().join("out/stage_002.csv")).unwrap();
    assert!(csv.starts_with("point,ell,weight\n"));
    assert_eq!(csv.lines().count(), 42);
    // floats carry 17 significant digits
    let text = fs::read_to_string(&run).unwrap();
    assert!(text.contains("1.0000000000000000e0"));
}

#[test]
fn verify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let run = identity_run(dir.path());
    let run_s = run.to_str().unwrap();

    let out = cvp(&["verify", "--run", run_s, "--checks", "el"]);
    assert_eq!(code(&out), 0);
    let verify = read(&dir.path().join("out/verify.json"));
    assert_eq!(verify["passed"], true);
    assert_eq!(verify["exit_code"], 0);

    // default checks come from the config
    assert_eq!(code(&cvp(&["verify", "--run", run_s])), 0);

    let out = cvp(&["verify", "--run", run_s, "--checks", "minimality", "--trials", "0"]);
    assert_eq!(code(&out), 1);
    let out = cvp(&["verify", "--run", run_s, "--checks", "el,bogus"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown check `bogus`"));

    let mut report = read(&run);
    let w = report["limit"]["weights"]["0"].as_f64().unwrap();
    report["limit"]["weights"]["0"] = json!(2.0 * w);
    let bad = dir.path().join("corrupted.json");
    write_json(&bad, &report);
    let bad_s = bad.to_str().unwrap();
    assert_eq!(code(&cvp(&["verify", "--run", bad_s, "--checks", "el"])), 2);
    assert_eq!(
        code(&cvp(&["verify", "--run", bad_s, "--checks", "minimality", "--trials", "1000"])),
        3
    );
    assert_eq!(code(&cvp(&["verify", "--run", bad_s, "--checks", "minimality,el"])), 2);
}

#[test]
fn every_check_passes_on_the_identity_grid() {
    let dir = tempfile::tempdir().unwrap();
    let run = identity_run(dir.path());
    let checks = "normalization,mass_bound,el,condition_iv,sufficient,nontriviality,gamma,minimality,support,ell_convergence,entropy_decay,compact_range,tail_mass";
    let out = cvp(&["verify", "--run", run.to_str().unwrap(), "--checks", checks, "--trials", "500"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(code(&out), 0, "{stdout}");
    assert_eq!(stdout.lines().filter(|l| l.ends_with(" pass")).count(), 13);
}

#[test]
fn failed_condition_exits_with_four() {
    let dir = tempfile::tempdir().unwrap();
    let config = setup(dir.path(), 0.25, -3.0, 25, 1.0, &[1.0, 2.0, 3.0]);
    assert_eq!(code(&cvp(&["solve", "--config", config.to_str().unwrap()])), 0);
    let run = dir.path().join("out/run.json");
    let out = cvp(&["verify", "--run", run.to_str().unwrap(), "--checks", "sufficient"]);
    assert_eq!(code(&out), 4);
}

#[test]
fn solve_is_deterministic_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let config = setup(dir.path(), 1.0, -15.0, 31, 1.5, &[5.0, 10.0, 15.0]);
    let c = config.to_str().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(code(&cvp(&["solve", "--config", c, "--out", a.to_str().unwrap()])), 0);
    let out = Command::new(env!("CARGO_BIN_EXE_cvp"))
        .args(["solve", "--config", c, "--out", b.to_str().unwrap()])
        .env("CVP_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert_eq!(fs::read(a.join("run.json")).unwrap(), fs::read(b.join("run.json")).unwrap());
    for i in 0..3 {
        let name = format!("stage_{i:03}.csv");
        assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap());
    }
    // a different seed changes the config hash
    let d = dir.path().join("d");
    assert_eq!(code(&cvp(&["solve", "--config", c, "--out", d.to_str().unwrap(), "--seed", "6"])), 0);
    assert_ne!(read(&a.join("run.json"))["config_hash"], read(&d.join("run.json"))["config_hash"]);
}

#[test]
fn invalid_configs_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = setup(dir.path(), 1.0, -5.0, 11, 1.0, &[2.0, 2.0]);
    let out = cvp(&["solve", "--config", config.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("radii"));

    let out = cvp(&["solve", "--config", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert_eq!(code(&cvp(&["solve"])), 1);
    assert_eq!(code(&cvp(&["--help"])), 0);
}

#[test]
fn oracle_examples() {
    let dir = tempfile::tempdir().unwrap();
    let run = |m: Value, extra: &[&str]| {
        let p = dir.path().join("m.json");
        write_json(&p, &m);
        let mut args = vec!["oracle", "--matrix", p.to_str().unwrap()];
        args.extend_from_slice(extra);
        let out = cvp(&args);
        (code(&out), serde_json::from_slice::<Value>(&out.stdout).unwrap_or(Value::Null))
    };
    let (c, v) = run(json!([[1.0, 0.5], [0.5, 1.0]]), &[]);
    assert_eq!(c, 0);
    assert!((v["value"].as_f64().unwrap() - 0.75).abs() < 1e-15);
    assert_eq!(v["certified_global"], true);

    let (_, v) = run(json!({ "matrix": [[2.0, 0.0], [0.0, 1.0]] }), &[]);
    let w: Vec<f64> = v["weights"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert!((w[0] - 1.0 / 3.0).abs() < 1e-15 && (w[1] - 2.0 / 3.0).abs() < 1e-15);

    let (_, v) = run(json!([[2.5]]), &[]);
    assert_eq!(v["value"].as_f64().unwrap(), 2.5);
    assert_eq!(v["weights"][0].as_f64().unwrap(), 1.0);

    let identity: Vec<Vec<f64>> = (0..17).map(|i| (0..17).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    let (c, _) = run(json!(identity), &[]);
    assert_eq!(c, 1);
    let (c, v) = run(json!(identity), &["--size", "4"]);
    assert_eq!(c, 0);
    assert!((v["value"].as_f64().unwrap() - 0.25).abs() < 1e-15);
}

#[test]
fn sweep_runs_the_cartesian_product() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path(), 1.0, -10.0, 21, 1.0, &[4.0, 8.0]);
    let sweep = dir.path().join("sweep.json");
    write_json(
        &sweep,
        &json!({ "base": "config.json", "axes": { "kernel.range": [1.0, 1.5], "solver.restarts": [0, 2] } }),
    );
    let out_dir = dir.path().join("sweep_out");
    let out = cvp(&["sweep", "--config", sweep.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary = read(&out_dir.join("sweep.json"));
    let entries = summary.as_array().unwrap();
    assert_eq!(entries.len(), 4);
    for (i, e) in entries.iter().enumerate() {
        assert_eq!(e["seed"].as_u64().unwrap(), 5 + i as u64);
        let report = read(&out_dir.join(e["run"].as_str().unwrap()));
        assert_eq!(report["config"]["kernel"]["range"], e["assignments"]["kernel.range"]);
        assert_eq!(report["config"]["seed"], e["seed"]);
    }
}
