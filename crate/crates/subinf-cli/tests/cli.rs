//! End-to-end checks of the `subinf` binary: exit codes, report shape,
//! determinism of seeded runs, and config-file merging.

use std::path::Path;
use std::process::Command;

fn subinf() -> Command {
    Command::new(env!("CARGO_BIN_EXE_subinf"))
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn unknown_map_is_a_validation_error() {
    let out = subinf()
        .args(["residual", "--map", "mystery", "--frame", "euclidean:2", "--points", "0,0"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mystery"));
}

#[test]
fn bad_geometry_is_a_validation_error() {
    let out = subinf()
        .args([
            "ccdist",
            "--frame",
            "euclidean:2",
            "--box",
            "1,0;0,1",
            "--from",
            "0,0",
            "--to",
            "1,0",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn failed_check_exits_with_code_two() {
    // The radial gaussian peaks strictly inside the box, so the max-min
    // check fails.
    let out = subinf()
        .args([
            "maxmin", "--map", "gauss", "--frame", "euclidean:2", "--box", "-1,1;-1,1",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn residual_report_shape_and_success_exit() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let out = subinf()
        .args([
            "residual",
            "--map",
            "paper_exp",
            "--frame",
            "euclidean:2",
            "--points",
            "0.3,0.1",
            "--output",
            path.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(&path);
    assert_eq!(report["config_echo"]["subcommand"], "residual");
    assert!(report["tool_version"].as_str().unwrap().starts_with("subinf"));
    let total = &report["results"]["records"][0]["total"];
    assert!(total[0].as_f64().unwrap().abs() < 1e-8);
    assert_eq!(report["results"]["tol"].as_f64().unwrap(), 1e-8);
}

#[test]
fn seeded_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| -> serde_json::Value {
        let path = dir.path().join(name);
        let out = subinf()
            .args([
                "varcheck",
                "--kind",
                "rank-one",
                "--map",
                "paper_exp",
                "--frame",
                "euclidean:2",
                "--box",
                "0.5,1.4;-0.9,-0.1",
                "--cells",
                "7",
                "--draws",
                "10",
                "--seed",
                "42",
                "--output",
                path.to_str().unwrap(),
            ])
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        read_json(&path)
    };
    let a = run("a.json");
    let b = run("b.json");
    assert_eq!(
        serde_json::to_string(&a["results"]).unwrap(),
        serde_json::to_string(&b["results"]).unwrap(),
        "identical config + seed must give identical result payloads"
    );
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(
        &cfg,
        r#"{
            "map": "aronsson",
            "frame": "euclidean:2",
            "points": "1,1"
        }"#,
    )
    .unwrap();
    let out_path = dir.path().join("r.json");
    let out = subinf()
        .args([
            "residual",
            "--config",
            cfg.to_str().unwrap(),
            "--map",
            "paper_exp",
            "--output",
            out_path.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(&out_path);
    // flag wins over the file, file fills the rest
    assert_eq!(report["config_echo"]["map"], "paper_exp");
    assert_eq!(report["config_echo"]["frame"], "euclidean:2");
    assert_eq!(report["config_echo"]["points"], "1,1");
}

#[test]
fn flow_trace_csv_has_expected_columns() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("trace.csv");
    let out = subinf()
        .args([
            "flow",
            "--map",
            "affine:1,1|0",
            "--frame",
            "euclidean:2",
            "--x0",
            "0,0",
            "--xi",
            "1",
            "--dt",
            "0.05",
            "--domain",
            "-1,1;-1,1",
            "--trace-csv",
            csv.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "t,r0,r1,hnorm_sq,projection");
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first.len(), 5);
}
