use std::io::{BufRead, BufReader, Write};
use std::process::{Command, Output, Stdio};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_plantagent");
const RETURNED: &str = "the customer returned a wood nameplate and said there should be a painted customer logo on the backside. The wood nameplate is now in the storage module.";

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn json_of(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout)
        .unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

#[test]
fn run_task_with_oracle_completes() {
    let out = run(&["--json", "run-task", "--backend", "oracle", "--task", RETURNED]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let trace = json_of(&out);
    assert_eq!(trace["outcome"], "completed");
    assert_eq!(trace["skill_plan"].as_array().unwrap().len(), 7);
}

#[test]
fn unknown_task_aborts_with_exit_1() {
    let out = run(&["run-task", "--task", "build a rocket"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("aborted"));
}

#[test]
fn missing_corpus_is_reported() {
    let out = run(&["evaluate", "--corpus", "missing.json"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("file not found"));
}

#[test]
fn unknown_subcommand_is_usage_error() {
    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn json_output_everywhere() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.json");
    let corpus = corpus.to_str().unwrap();

    let cases: Vec<Vec<&str>> = vec![
        vec!["--json", "render-prompt", "--task", "produce a steel sheet with a hole"],
        vec!["--json", "validate", "--plan", "S1,T1,P2,T1,I3,T1,S2", "--task", RETURNED],
        vec!["--json", "collect", "--backend", "oracle", "--n", "2", "--out", corpus],
        vec!["--json", "evaluate", "--corpus", corpus],
    ];
    for args in cases {
        let out = run(&args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        json_of(&out);
    }
    let metrics = json_of(&run(&["--json", "evaluate", "--corpus", corpus]));
    assert_eq!(metrics["samples"], 6);
    assert_eq!(metrics["minimal_fraction"], 1.0);
}

#[test]
fn parse_reads_stdin() {
    let mut child = Command::new(BIN)
        .args(["--json", "parse", "--kind", "skills"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all("{(S1) – (T1) – (P2) – (T1) – (I3) – (T1) – (S2)}".as_bytes())
        .unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    assert_eq!(json_of(&out)["steps"][2], "P2");
}

#[test]
fn validate_reports_violations() {
    let out = run(&["validate", "--plan", "S1,P2,S2", "--task", RETURNED]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("grammar: violated"), "{text}");
    assert!(text.contains("transport required between S1 and P2"), "{text}");
}

#[tokio::test]
async fn serve_answers_state_requests() {
    let mut child = Command::new(BIN)
        .args(["serve", "--port", "0"])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let url = line.trim().strip_prefix("plant listening on ").unwrap().to_string();
    let resp = reqwest::get(format!("{url}plant/state")).await.unwrap();
    let status = resp.status().as_u16();
    let body: Value = resp.json().await.unwrap();
    child.kill().unwrap();
    child.wait().unwrap();
    assert_eq!(status, 200);
    assert_eq!(body["version"], 0);
}
