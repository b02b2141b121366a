use std::path::PathBuf;
use std::process::{Command, Output};

use stp_sim::{Trace, TraceEvent};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

fn stp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stp"))
        .args(args)
        .output()
        .expect("stp runs")
}

fn path(p: &std::path::Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn run_prints_a_parseable_trace() {
    let o = stp(&["run", path(&fixture("recharge_resume.json"))]);
    assert_eq!(o.status.code(), Some(0));
    let trace = Trace::from_ndjson(&stdout(&o)).unwrap();
    assert!(trace
        .events()
        .any(|e| matches!(e, TraceEvent::Abduce { found: true, .. })));
}

#[test]
fn run_writes_the_trace_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("trace.ndjson");
    let o = stp(&[
        "run",
        path(&fixture("recharge_resume.json")),
        "--trace",
        path(&out),
        "--threads",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "R: goal satisfied\n");
    let direct = stp(&[
        "run",
        path(&fixture("recharge_resume.json")),
        "--threads",
        "4",
    ]);
    assert_eq!(std::fs::read_to_string(&out).unwrap(), stdout(&direct));
}

#[test]
fn glue_shows_the_obstruction_and_its_explanation() {
    let o = stp(&["glue", path(&fixture("color_conflict.json"))]);
    assert_eq!(o.status.code(), Some(0));
    let trace = Trace::from_ndjson(&stdout(&o)).unwrap();
    let kinds: Vec<_> = trace.events().map(TraceEvent::kind).collect();
    assert_eq!(kinds, ["merge", "abduce"]);
}

#[test]
fn abduce_explains_the_whole_run() {
    let o = stp(&[
        "abduce",
        path(&fixture("recharge_resume.json")),
        "--max-len",
        "3",
        "--mode",
        "all-minimal",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let explanations = v["explanations"].as_array().unwrap();
    assert_eq!(explanations.len(), 1);
    assert_eq!(explanations[0]["length"], 1);
}

#[test]
fn spectrum_of_a_single_edge() {
    let o = stp(&["spectrum", path(&fixture("sheaves/single_edge.json"))]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let eig: Vec<f64> = serde_json::from_value(v["eigenvalues"].clone()).unwrap();
    assert!(
        eig[0].abs() < 1e-9 && (eig[1] - 5.0).abs() < 1e-9,
        "{eig:?}"
    );
    assert_eq!(v["h0Dim"], 1);
}

#[test]
fn consensus_reaches_the_projection() {
    let o = stp(&["consensus", path(&fixture("sheaves/single_edge.json"))]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let state: Vec<Vec<f64>> = serde_json::from_value(v["state"].clone()).unwrap();
    assert!((state[0][0] - 1.2).abs() < 1e-6 && (state[1][0] - 0.6).abs() < 1e-6);

    let o = stp(&[
        "consensus",
        path(&fixture("sheaves/ring5.json")),
        "--alpha",
        "0.2",
        "--csv",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("iteration,energy"));
    let energies: Vec<f64> = lines
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(energies.windows(2).all(|w| w[1] <= w[0] + 1e-12));
}

#[test]
fn unstable_step_is_a_validation_failure() {
    let o = stp(&[
        "consensus",
        path(&fixture("sheaves/single_edge.json")),
        "--alpha",
        "1.0",
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn validate_exit_codes() {
    let o = stp(&["validate", path(&fixture("blocksworld_intervention.json"))]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "ok\n");

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    let mut v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(fixture("recharge_resume.json")).unwrap())
            .unwrap();
    v["agents"][0]["plan"][0]["at"] = 99.into();
    std::fs::write(&bad, v.to_string()).unwrap();
    let o = stp(&["validate", path(&bad)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("agents[0].plan[0]"));

    let o = stp(&["run", path(&bad)]);
    assert_eq!(o.status.code(), Some(1));

    let o = stp(&["validate", path(&dir.path().join("missing.json"))]);
    assert_eq!(o.status.code(), Some(2));
}
