use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ratcons"))
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(format!("{name}.json"))
}

fn exec(cmd: &str, config: &Path, out: &Path) -> i32 {
    let status = bin()
        .args([cmd, "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
        .status;
    status.code().expect("exit code")
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn shipped_scenarios_meet_their_expectations() {
    let cases = [
        ("run", "c01-xor-parity"),
        ("run", "c02-even-validity"),
        ("equilibrium", "c02-even-deviation"),
        ("verify", "c03-output-uniformity"),
        ("equilibrium", "c05-non-uniform"),
        ("equilibrium", "c06-mv-min"),
        ("equilibrium", "c06-mv-leader"),
        ("verify", "c08-encoding"),
        ("verify", "c08-lossy"),
        ("verify", "c09-transform"),
        ("verify", "c10-resilience"),
        ("verify", "c10-diamond-knowers"),
        ("verify", "c11-silences"),
        ("verify", "c11-silences-rewritten"),
    ];
    for (cmd, name) in cases {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(exec(cmd, &scenario(name), dir.path()), 0, "{cmd} {name}");
    }
}

#[test]
fn unmet_expectation_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"protocol": "xor-lossy", "topology": {"kind": "complete", "n": 3},
            "check": "encoding", "expect": "pass"}"#,
    );
    assert_eq!(exec("verify", &cfg, dir.path()), 1);
    let report = read_json(&dir.path().join("verify.json"));
    assert_eq!(report["pass"], Value::Bool(false));
}

#[test]
fn bad_input_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = write_config(dir.path(), r#"{"protocol": "nope", "topology": {"kind": "ring", "n": 3}}"#);
    assert_eq!(exec("run", &unknown, dir.path()), 2);

    let malformed = write_config(dir.path(), "{ not json");
    assert_eq!(exec("run", &malformed, dir.path()), 2);

    let extra = write_config(
        dir.path(),
        r#"{"protocol": "xor-consensus", "topology": {"kind": "ring", "n": 3}, "colour": 1}"#,
    );
    assert_eq!(exec("run", &extra, dir.path()), 2);

    assert_eq!(exec("run", &dir.path().join("missing.json"), dir.path()), 2);
    assert_eq!(bin().arg("frobnicate").output().unwrap().status.code(), Some(2));
    assert_eq!(bin().arg("--help").output().unwrap().status.code(), Some(0));
}

#[test]
fn verify_without_check_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(exec("verify", &scenario("c05-non-uniform"), dir.path()), 2);
}

#[test]
fn xor_ring3_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"protocol": "xor-consensus", "topology": {"kind": "ring", "n": 3}}"#);
    assert_eq!(exec("run", &cfg, dir.path()), 0);
    let s = read_json(&dir.path().join("summary.json"));
    assert_eq!(s["mode"], "exhaustive");
    assert_eq!(s["outcomes"]["legal"], 64);
    assert_eq!(s["decision_distribution"]["1"], "1/2");
    assert_eq!(s["decision_distribution"]["0"], "1/2");

    let traces = fs::read_to_string(dir.path().join("traces.jsonl")).unwrap();
    // one line per agent per round per run
    assert_eq!(traces.lines().count(), 64 * 3 * 2);
    let last: Value = serde_json::from_str(traces.lines().last().unwrap()).unwrap();
    assert_eq!(last["run"], 63);
    assert_eq!(last["agent"], 2);
    let csv = fs::read_to_string(dir.path().join("runs.csv")).unwrap();
    assert_eq!(csv.lines().count(), 65);
}

#[test]
fn ring4_reports_validity_failures() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(exec("run", &scenario("c02-even-validity"), dir.path()), 0);
    let s = read_json(&dir.path().join("summary.json"));
    assert!(s["outcomes"]["validity"].as_u64().unwrap() > 0);
}

#[test]
fn algorithm1_complete4_is_all_legal() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"protocol": "algorithm1", "topology": {"kind": "complete", "n": 4}, "expect": "all-legal"}"#,
    );
    assert_eq!(exec("run", &cfg, dir.path()), 0);
}

#[test]
fn sampling_fallback_above_the_cap() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"protocol": "xor-consensus", "topology": {"kind": "ring", "n": 5},
            "cap": 10, "samples": 40}"#,
    );
    assert_eq!(exec("run", &cfg, dir.path()), 0);
    let s = read_json(&dir.path().join("summary.json"));
    assert_eq!(s["mode"], "sampled");
    assert_eq!(s["runs"], 40);

    let strict = write_config(dir.path(), r#"{"protocol": "xor-consensus", "topology": {"kind": "ring", "n": 5}, "cap": 10}"#);
    assert_eq!(exec("run", &strict, dir.path()), 2);
}

#[test]
fn reruns_are_byte_identical() {
    let cases = [
        ("run", "c01-xor-parity", "summary.json"),
        ("run", "c01-xor-parity", "traces.jsonl"),
        ("equilibrium", "c05-non-uniform", "equilibrium.json"),
        ("verify", "c11-silences", "verify.json"),
    ];
    for (cmd, name, file) in cases {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        exec(cmd, &scenario(name), a.path());
        exec(cmd, &scenario(name), b.path());
        let x = fs::read_to_string(a.path().join(file)).unwrap();
        let y = fs::read_to_string(b.path().join(file)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{name}/{file}");
    }
}
