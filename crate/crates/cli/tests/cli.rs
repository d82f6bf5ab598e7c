use std::process::{Command, Output};

fn amm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_amm")).args(args).output().expect("binary runs")
}

#[test]
fn simulate_prints_metrics_as_json() {
    let out = amm(&["simulate", "--scenario", "city_a", "--controller", "MAX_PRESSURE"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["scenario"], "city_a");
    assert!(doc["metrics"]["avg_travel_time_s"].as_f64().unwrap() > 0.0);
    assert_eq!(doc["final_digest"].as_str().unwrap().len(), 64);
}

#[test]
fn collect_writes_one_record_per_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = amm(&["collect", "--scenario", "city_a", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("city_a.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 720);
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(first["o_t"]["schema_id"], "SCHEMA_A");
}

#[test]
fn config_problems_exit_with_two() {
    assert_eq!(amm(&["simulate", "--controller", "NOPE"]).status.code(), Some(2));
    assert_eq!(amm(&["evaluate", "--method", "DQN"]).status.code(), Some(2));
    assert_eq!(amm(&["--config", "/nonexistent/config.json", "simulate"]).status.code(), Some(2));
    assert_eq!(amm(&["simulate", "--scenario", "no_such_city"]).status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"unknown_key": 1}"#).unwrap();
    assert_eq!(amm(&["--config", cfg.to_str().unwrap(), "simulate"]).status.code(), Some(2));
    assert_eq!(amm(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn runtime_failures_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let phi = dir.path().join("missing_phi.json");
    assert_eq!(amm(&["adapt", "--phi", phi.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn scenario_files_resolve_relative_to_the_config() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("tiny.json"),
        r#"{"name":"tiny","network":{"rows":1,"cols":1},"flows":[],"episode_s":100}"#,
    )
    .unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"target":"tiny.json","method":"FIXED_TIME"}"#).unwrap();
    let out = amm(&["--config", cfg.to_str().unwrap(), "simulate"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["scenario"], "tiny");
}
