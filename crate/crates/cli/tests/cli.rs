use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use geoanneal::bench::EnsembleReport;
use geoanneal::schedule::ScheduleFunction;
use serde_json::Value;

fn geoanneal(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_geoanneal"))
        .args(args)
        .arg("--out-dir")
        .arg(dir)
        .env_remove("GEOANNEAL_OUT_DIR")
        .output()
        .expect("spawn geoanneal")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = geoanneal(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read_json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn schedule_command_places_slope_minimum_at_center() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &[
            "schedule", "--center", "0.62", "--gamma0", "3.20", "--sigma", "0.05",
        ],
    );
    let sched = ScheduleFunction::read_csv("cli", dir.path().join("schedule.csv")).unwrap();
    let (_, s) = sched.slope_minimum();
    assert!((s - 0.62).abs() < 0.05, "slope minimum at s = {s}");
    let summary = read_json(dir.path().join("schedule.json"));
    assert!((summary["slope_minimum_s"].as_f64().unwrap() - s).abs() < 1e-12);
}

#[test]
fn schedule_angles_export() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &["schedule", "--center", "0.5", "--T", "8", "--step", "0.5"],
    );
    let angles = read_json(dir.path().join("angles.json"));
    assert_eq!(angles["p"], 16);
    assert_eq!(angles["beta"].as_array().unwrap().len(), 16);
    assert_eq!(angles["gamma"].as_array().unwrap().len(), 16);
}

#[test]
fn simulate_linear_on_stored_instance() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["generate", "--n", "5", "--seed", "11"]);
    let inst = dir.path().join("sk-n5-seed11.json");
    assert!(inst.is_file());
    let inst = inst.to_str().unwrap();
    ok(
        dir.path(),
        &[
            "simulate",
            "--schedule",
            "linear",
            "--T",
            "128",
            "--step",
            "0.125",
            "--order",
            "2",
            "--instance",
            inst,
        ],
    );
    let result = read_json(dir.path().join("result.json"));
    let p = result["success_probability"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&p));
    assert_eq!(result["p"], 1024);
    assert_eq!(result["schedule_id"], "linear");
}

#[test]
fn outputs_are_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        ok(dir, &["generate", "--n", "4", "--seed", "2", "--manifest"]);
        let inst = dir.join("sk-n4-seed2.json");
        ok(
            dir,
            &[
                "meanfield",
                "--instance",
                inst.to_str().unwrap(),
                "--T",
                "16",
            ],
        );
    }
    for name in ["sk-n4-seed2.json", "meanfield.csv", "frustration.json"] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
    let manifest = read_json(a.path().join("generate-manifest.json"));
    assert_eq!(manifest["command"], "generate");
    assert_eq!(manifest["config"]["n"], 4);
}

#[test]
fn mine_then_bench_recomputes_aggregates() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &[
            "mine",
            "--n",
            "5",
            "--pool",
            "60",
            "--seed",
            "4",
            "--frustration-threshold",
            "1",
            "--cutoff",
            "1",
            "--T",
            "16",
        ],
    );
    let mining = read_json(d.join("mined/mining.json"));
    assert_eq!(mining["stats"]["pool_size"], 60);
    let mined = d.join("mined");
    ok(
        d,
        &[
            "bench",
            "--dir",
            mined.to_str().unwrap(),
            "--T",
            "16",
            "--cutoff",
            "1",
            "--jobs",
            "1",
        ],
    );
    let report = EnsembleReport::load_json(d.join("report.json")).unwrap();
    assert_eq!(report.records.len(), 60);
    assert_eq!(report.aggregates, report.recompute_aggregates());
    let summary = fs::read_to_string(d.join("summary.csv")).unwrap();
    assert!(summary.starts_with("T,"));
}

#[test]
fn sat_file_is_mapped() {
    let dir = tempfile::tempdir().unwrap();
    let sat = dir.path().join("tiny.cnf");
    fs::write(&sat, "p max2sat 2 2\n1 2 0\n-1 -2 0\n").unwrap();
    ok(dir.path(), &["generate", "--sat", sat.to_str().unwrap()]);
    let inst = read_json(dir.path().join("tiny.json"));
    assert_eq!(inst["n"], 2);
}

#[test]
fn failures_emit_error_json() {
    let dir = tempfile::tempdir().unwrap();
    let missing = geoanneal(
        dir.path(),
        &["simulate", "--instance", "missing.json", "--T", "4"],
    );
    assert!(!missing.status.success());
    let err: Value = serde_json::from_slice(&missing.stderr).unwrap();
    assert_eq!(err["error"], "io");

    let flag = geoanneal(dir.path(), &["spectrum", "--no-such-flag"]);
    assert_eq!(flag.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&flag.stderr).unwrap();
    assert_eq!(err["error"], "usage");

    ok(dir.path(), &["generate", "--n", "13", "--seed", "0"]);
    let big = dir.path().join("sk-n13-seed0.json");
    let guard = geoanneal(
        dir.path(),
        &["spectrum", "--instance", big.to_str().unwrap()],
    );
    assert!(!guard.status.success());
    let err: Value = serde_json::from_slice(&guard.stderr).unwrap();
    assert!(err["message"].as_str().unwrap().contains("13"));

    let bad = geoanneal(dir.path(), &["schedule", "--center", "1.5"]);
    let err: Value = serde_json::from_slice(&bad.stderr).unwrap();
    assert_eq!(err["error"], "invalid-argument");
}
