//! End-to-end checks of the `netros` binary: the exit-code contract
//! (0 success, 1 usage/parse, 2 non-convergent fit, 3 infeasible
//! placement) and the shape of the emitted files.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use netros_sim::workload::builtin_airport_scenario;

fn netros(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_netros"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn write(path: &Path, content: &str) {
    fs::write(path, content).expect("write test file");
}

#[test]
fn missing_scenario_file_exits_one() {
    let out = netros(&["compare", "--scenario", "/definitely/not/here.json", "--out", "x"]);
    assert_eq!(exit_code(&out), 1);
    assert!(stderr(&out).contains("cannot read"));
}

#[test]
fn unknown_policy_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = netros(&["compare", "--policies", "flying", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(exit_code(&out), 1);
    assert!(stderr(&out).contains("unknown policy `flying`"));

    let out = netros(&["run", "--policy", "flying", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(exit_code(&out), 1);
}

#[test]
fn missing_required_flag_exits_one() {
    let out = netros(&["run"]);
    assert_eq!(exit_code(&out), 1);
}

#[test]
fn zero_samples_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = netros(&[
        "compare",
        "--samples",
        "0",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 1);
    assert!(stderr(&out).contains("--samples"));
}

#[test]
fn unreachable_percent_target_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let targets = dir.path().join("targets.json");
    write(&targets, "{\"edge_vs_cloud_spd_pct\": 250.0}");
    let out = netros(&[
        "calibrate",
        "--targets",
        targets.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 2);
    assert!(stderr(&out).contains("250"));
}

#[test]
fn malformed_targets_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let targets = dir.path().join("targets.json");
    write(&targets, "{ not json");
    let out = netros(&[
        "calibrate",
        "--targets",
        targets.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 1);
}

#[test]
fn infeasible_placement_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let mut doc = builtin_airport_scenario();
    for node in &mut doc.topology.nodes {
        if node.id == "edge" {
            node.memory_gb = 0.0;
        }
    }
    let scenario = dir.path().join("scenario.json");
    write(&scenario, &serde_json::to_string(&doc).unwrap());
    let out = netros(&[
        "compare",
        "--scenario",
        scenario.to_str().unwrap(),
        "--policies",
        "edge",
        "--samples",
        "1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 3);
    assert!(stderr(&out).contains("edge"));
}

#[test]
fn invalid_scenario_lists_violations_and_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let mut doc = builtin_airport_scenario();
    doc.workload.tasks[0].subscribes.insert("no_such_topic".into());
    let scenario = dir.path().join("scenario.json");
    write(&scenario, &serde_json::to_string(&doc).unwrap());
    let out = netros(&[
        "run",
        "--scenario",
        scenario.to_str().unwrap(),
        "--policy",
        "hybrid",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 1);
    let err = stderr(&out);
    assert!(err.contains("scenario is invalid"), "stderr: {err}");
    assert!(err.contains("no_such_topic"), "stderr: {err}");
}

#[test]
fn calibrate_writes_params_and_prints_residual() {
    let dir = tempfile::tempdir().unwrap();
    let out = netros(&["calibrate", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("residual 0.04"), "stdout: {}", stdout(&out));
    let params = fs::read_to_string(dir.path().join("fitted_params.json")).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&params).unwrap();
    assert!(parsed["internet_bandwidth_mbps"].as_f64().unwrap() > 0.0);
    assert!(parsed["residual"].as_f64().unwrap() <= 0.15);
}

#[test]
fn single_policy_single_sample_compare_is_valid() {
    let dir = tempfile::tempdir().unwrap();
    let out = netros(&[
        "compare",
        "--policies",
        "hybrid",
        "--samples",
        "1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr(&out));
    let latency = fs::read_to_string(dir.path().join("latency.csv")).unwrap();
    let mut lines = latency.lines();
    assert_eq!(lines.next().unwrap(), "policy,n,mean_ms,p50_ms,p95_ms,p99_ms,min_ms,max_ms");
    assert!(lines.next().unwrap().starts_with("hybrid,1,"));
    assert!(dir.path().join("report.txt").exists());
}

#[test]
fn compare_emits_all_outputs_with_expected_headers() {
    let dir = tempfile::tempdir().unwrap();
    let out = netros(&[
        "compare",
        "--samples",
        "10",
        "--seed",
        "5",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr(&out));
    let load = fs::read_to_string(dir.path().join("load.csv")).unwrap();
    assert!(load.starts_with("policy,cpu_low_pct,cpu_high_pct,memory_gb\n"));
    assert_eq!(load.lines().count(), 5, "header + one row per policy");
    let resp = fs::read_to_string(dir.path().join("response.csv")).unwrap();
    assert!(resp.starts_with("policy,recognition_ms,response_ms\n"));
    let report = fs::read_to_string(dir.path().join("report.txt")).unwrap();
    assert!(report.contains("spd(local, cloud)"));
    assert_eq!(stdout(&out), report, "report is echoed to stdout");
}

#[test]
fn oracle_run_equals_hybrid_run_on_builtin() {
    let dir = tempfile::tempdir().unwrap();
    let oracle_dir = dir.path().join("oracle");
    let hybrid_dir = dir.path().join("hybrid");
    for (policy, out_dir) in [("oracle", &oracle_dir), ("hybrid", &hybrid_dir)] {
        let out = netros(&[
            "run",
            "--policy",
            policy,
            "--samples",
            "5",
            "--seed",
            "3",
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert_eq!(exit_code(&out), 0, "stderr: {}", stderr(&out));
    }
    let oracle_trace = fs::read_to_string(oracle_dir.join("trace.csv")).unwrap();
    let hybrid_trace = fs::read_to_string(hybrid_dir.join("trace.csv")).unwrap();
    assert_eq!(oracle_trace, hybrid_trace, "oracle must choose the hybrid assignment");
}
