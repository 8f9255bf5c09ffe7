//! End-to-end tests of the binary: artifact shape, exit-code contract,
//! and byte-level reproducibility under a fixed seed.

use serde_json::Value;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sidonlab"))
        .args(args)
        .env_remove("SIDONLAB_CAPACITY")
        .output()
        .expect("binary runs")
}

fn artifact(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "exit {:?}, stderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is one JSON artifact")
}

/// The artifact with its wall-time field removed, for byte comparisons.
fn without_wall_time(stdout: &[u8]) -> String {
    let mut v: Value = serde_json::from_slice(stdout).unwrap();
    v.as_object_mut().unwrap().remove("wall_time_ms").unwrap();
    v.to_string()
}

const RATIO2: &str = r#"{"family":"Z","elements":[1,2,4]}"#;
const DEPENDENT: &str = r#"{"family":"Z","elements":[1,2,3]}"#;

#[test]
fn qi_check_accepts_the_ratio2_example() {
    let out = run(&["qi-check", "--set", RATIO2]);
    let v = artifact(&out);
    assert_eq!(v["result"]["qi"], Value::Bool(true));
    assert_eq!(v["result"]["size"], 3);
    assert_eq!(v["command"], "qi-check");
    assert_eq!(v["tool_version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(v["seed"], 0);
    assert_eq!(v["input_hash"].as_str().unwrap().len(), 64);
    assert!(v["wall_time_ms"].is_number());
}

#[test]
fn qi_check_reports_a_normalized_witness() {
    let out = run(&["qi-check", "--set", DEPENDENT]);
    let v = artifact(&out);
    assert_eq!(v["result"]["qi"], Value::Bool(false));
    let witness = &v["result"]["witness"];
    assert_eq!(witness["height"], 3);
    assert_eq!(witness["eps"]["1"], 1);
    assert_eq!(witness["eps"]["2"], 1);
    assert_eq!(witness["eps"]["3"], -1);
}

#[test]
fn walsh_sets_parse_from_text_keys() {
    let out = run(&[
        "qi-check",
        "--set",
        r#"{"family":"Walsh","elements":["r0","r1","r0*r1"]}"#,
    ]);
    let v = artifact(&out);
    assert_eq!(v["result"]["qi"], Value::Bool(false));
    assert_eq!(v["result"]["witness"]["height"], 3);
}

#[test]
fn malformed_json_exits_2_with_position() {
    let out = run(&["qi-check", "--set", r#"{"family":"Z","elements":[1,2,"#]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("malformed JSON"), "stderr: {stderr}");
    assert!(stderr.contains("line 1 column"), "stderr: {stderr}");
}

#[test]
fn capacity_exhaustion_exits_3() {
    let out = run(&["qi-check", "--set", DEPENDENT, "--capacity", "10"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("capacity error"));
}

#[test]
fn capacity_env_var_is_honored() {
    let out = Command::new(env!("CARGO_BIN_EXE_sidonlab"))
        .args(["qi-check", "--set", DEPENDENT])
        .env("SIDONLAB_CAPACITY", "10")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn exhausted_extraction_exits_4() {
    let out = run(&[
        "extract-qi",
        "--set",
        r#"{"family":"Z","elements":[1,2,3,4]}"#,
        "--max-attempts",
        "1",
        "--seed",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("extraction failed after 1 attempts"));
}

#[test]
fn rademacher_m16_certifies_the_exact_ratio() {
    let out = run(&["rademacher", "--m", "16"]);
    let v = artifact(&out);
    let ratio = v["result"]["ratio"].as_f64().unwrap();
    assert!((ratio - 16.0 * (std::f64::consts::PI / 32.0).sin()).abs() <= 1e-12);
    assert!((ratio - 1.568_274_245_272_969_7).abs() <= 1e-12);
    assert_eq!(v["result"]["sup"].as_f64().unwrap(), 1.0);
}

#[test]
fn witness_margins_meet_the_3sqrt3_floor() {
    let out = run(&[
        "witness",
        "--set",
        r#"{"family":"Z","elements":[1,2,4,8,16]}"#,
        "--a",
        "0.57735",
    ]);
    let v = artifact(&out);
    assert_eq!(v["result"]["certified"], Value::Bool(true));
    let witness = &v["result"]["witness"];
    assert!(witness["min_margin"].as_f64().unwrap() >= 0.192_450);
    let margins = witness["margins"].as_array().unwrap();
    assert_eq!(margins.len(), 5);
    for entry in margins {
        assert!(entry["margin"].as_f64().unwrap() >= 0.192_450);
        assert!(entry["lambda"]["n"].is_number());
    }
}

#[test]
fn identical_seed_gives_identical_bytes() {
    let elements: Vec<String> = (1..=40).map(|n| n.to_string()).collect();
    let set = format!(r#"{{"family":"Z","elements":[{}]}}"#, elements.join(","));
    let args = ["extract-qi", "--set", set.as_str(), "--seed", "7"];
    let first = run(&args);
    let second = run(&args);
    assert!(first.status.success() && second.status.success());
    assert_eq!(
        without_wall_time(&first.stdout),
        without_wall_time(&second.stdout)
    );
    // a different seed is allowed to differ, proving the comparison sees
    // through to the randomized payload
    let other = run(&["extract-qi", "--set", set.as_str(), "--seed", "8"]);
    assert_ne!(
        without_wall_time(&first.stdout),
        without_wall_time(&other.stdout)
    );
}

#[test]
fn set_files_output_files_and_traces_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("weighted.json");
    let trace = dir.path().join("trace.json");
    let artifact_path = dir.path().join("artifact.json");
    std::fs::write(
        &input,
        r#"{"family":"Z","elements":[{"n":3,"w":1.0},{"n":5,"w":1.0},{"n":7,"w":1.0},{"n":11,"w":1.0}]}"#,
    )
    .unwrap();
    let out = run(&[
        "cb-extract",
        "--input",
        input.to_str().unwrap(),
        "--R",
        "4",
        "--C",
        "1.0",
        "--seed",
        "42",
        "--trace",
        trace.to_str().unwrap(),
        "--output",
        artifact_path.to_str().unwrap(),
    ]);
    let v = artifact(&out);
    assert_eq!(v["result"]["certificate"]["output_size"], 4);
    assert!(v["result"]["certificate"]["ratio"].as_f64().unwrap() >= 1.0 - 1e-12);
    // --output mirrors stdout byte for byte
    assert_eq!(std::fs::read(&artifact_path).unwrap(), out.stdout);
    // the trace is valid JSON and reruns byte-identically
    let first_trace = std::fs::read(&trace).unwrap();
    let parsed: Value = serde_json::from_slice(&first_trace).unwrap();
    assert_eq!(parsed["totals"]["w"].as_f64().unwrap(), 4.0);
    let rerun = run(&[
        "cb-extract",
        "--input",
        input.to_str().unwrap(),
        "--R",
        "4",
        "--C",
        "1.0",
        "--seed",
        "42",
        "--trace",
        trace.to_str().unwrap(),
    ]);
    assert!(rerun.status.success());
    assert_eq!(std::fs::read(&trace).unwrap(), first_trace);
}

#[test]
fn csv_is_rejected_off_the_tabular_commands() {
    let out = run(&["qi-check", "--set", RATIO2, "--format", "csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("tabular"));
}

#[test]
fn rudin_scan_emits_csv_rows() {
    let poly = r#"[{"character":{"family":"Z","n":1},"re":1.0,"im":0.0},
                   {"character":{"family":"Z","n":2},"re":1.0,"im":0.0}]"#;
    let out = run(&["rudin", "--poly", poly, "--ps", "2,4", "--format", "csv"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("# tool_version="));
    assert!(text.contains("# input_hash="));
    let mut lines = text.lines().skip_while(|l| l.starts_with('#'));
    assert_eq!(lines.next(), Some("p,ratio"));
    let first = lines.next().unwrap();
    assert!(first.starts_with("2,0.7071067811865"), "row: {first}");
}

#[test]
fn selftest_quick_reports_nine_criteria_and_the_honest_red() {
    let out = run(&["selftest", "--quick"]);
    // criterion 5's threshold sits above 16·sin(π/32): honest failure
    assert_eq!(out.status.code(), Some(1));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let criteria = v["result"]["criteria"].as_array().unwrap();
    assert_eq!(criteria.len(), 9);
    for (i, c) in criteria.iter().enumerate() {
        assert_eq!(c["id"].as_u64().unwrap(), i as u64 + 1);
        let expected = i != 4;
        assert_eq!(
            c["passed"].as_bool().unwrap(),
            expected,
            "criterion {}: {}",
            i + 1,
            c["details"]
        );
    }
    assert_eq!(v["result"]["passed"], Value::Bool(false));
    assert!(criteria[4]["details"]
        .as_str()
        .unwrap()
        .contains("1.568274"));
}
