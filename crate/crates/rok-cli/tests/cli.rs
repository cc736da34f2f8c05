//! End-to-end checks of the `rok` binary: output shapes, exit codes,
//! config precedence, and a golden-file match for `answer --json`.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn rok(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rok"))
        .args(args)
        .env_remove("ROK_CONFIG")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn graph_stats_prints_counts_and_exits_zero() {
    let graph = fixtures().join("toy_medical_kg.tsv");
    let out = rok(&["graph", "stats", graph.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(stdout(&out).starts_with("entities=27, relations=4, triples=30"));
}

#[test]
fn graph_stats_json_is_schema_stable() {
    let graph = fixtures().join("toy_medical_kg.tsv");
    let out = rok(&["--json", "graph", "stats", graph.to_str().unwrap()]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["entities"], 27);
    assert_eq!(v["relations"], 4);
    assert_eq!(v["triples"], 30);
}

#[test]
fn missing_graph_file_is_a_domain_error() {
    let out = rok(&["graph", "stats", "/nonexistent/kg.tsv"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = rok(&["graph", "stats", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_entity_in_paths_is_a_domain_error() {
    let graph = fixtures().join("toy_medical_kg.tsv");
    let out = rok(&[
        "paths",
        "--graph",
        graph.to_str().unwrap(),
        "--entities",
        "unobtainium",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unobtainium"));
}

#[test]
fn single_entity_paths_prints_fallback_subgraph() {
    let graph = fixtures().join("toy_medical_kg.tsv");
    let out = rok(&[
        "paths",
        "--graph",
        graph.to_str().unwrap(),
        "--entities",
        "migraine",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("subgraph (7 triples):"));
    assert!(text.contains("(migraine, treated_with, sumatriptan)"));
}

#[test]
fn link_prints_mention_table() {
    let graph = fixtures().join("toy_medical_kg.tsv");
    let out = rok(&[
        "link",
        "--graph",
        graph.to_str().unwrap(),
        "--question",
        "hoarse voice, warp drive",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("hoarse voice"));
    assert!(text.contains("(unmatched)"));
}

#[test]
fn answer_json_matches_golden_file() {
    let graph = fixtures().join("toy_medical_kg.tsv");
    let mock = fixtures().join("mock_responses.json");
    let out = rok(&[
        "answer",
        "--json",
        "--graph",
        graph.to_str().unwrap(),
        "--question",
        "I have a hoarse voice and a sore throat.",
        "--mock-file",
        mock.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let golden = std::fs::read_to_string(
        Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/answer.json"),
    )
    .unwrap();
    assert_eq!(stdout(&out), golden);
}

#[test]
fn answer_without_mock_file_fails_cleanly() {
    let graph = fixtures().join("toy_medical_kg.tsv");
    let out = rok(&[
        "answer",
        "--graph",
        graph.to_str().unwrap(),
        "--question",
        "anything",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("llm.mock_file"));
}

#[test]
fn batch_then_eval_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("records.jsonl");
    let graph = fixtures().join("toy_medical_kg.tsv");
    let mock = fixtures().join("mock_responses.json");
    let questions = fixtures().join("questions_toy.jsonl");

    let out = rok(&[
        "batch",
        "--graph",
        graph.to_str().unwrap(),
        "--questions",
        questions.to_str().unwrap(),
        "--out",
        out_path.to_str().unwrap(),
        "--mock-file",
        mock.to_str().unwrap(),
        "--jobs",
        "2",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(stdout(&out).contains("answered 50 questions"));

    let eval = rok(&[
        "--json",
        "eval",
        "--results",
        out_path.to_str().unwrap(),
        "--metric",
        "entity-match",
    ]);
    assert!(
        eval.status.success(),
        "{}",
        String::from_utf8_lossy(&eval.stderr)
    );
    let v: serde_json::Value = serde_json::from_str(&stdout(&eval)).unwrap();
    assert!(v["overall"].is_number());
    assert_eq!(v["averaging"], "macro");

    let hits = rok(&[
        "--json",
        "eval",
        "--results",
        out_path.to_str().unwrap(),
        "--metric",
        "hits1",
    ]);
    assert!(hits.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&hits)).unwrap();
    assert_eq!(v["total"], 17);
}

#[test]
fn flag_overrides_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("rok.toml");
    std::fs::write(&cfg_path, "[ranker]\ntop_k = 1\n").unwrap();
    let graph = fixtures().join("toy_medical_kg.tsv");

    // file alone: only one selected path
    let out = rok(&[
        "--config",
        cfg_path.to_str().unwrap(),
        "--json",
        "paths",
        "--graph",
        graph.to_str().unwrap(),
        "--entities",
        "hoarse voice,laryngitis",
    ]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["selected"].as_array().unwrap().len(), 1);

    // flag beats the file
    let out = rok(&[
        "--config",
        cfg_path.to_str().unwrap(),
        "--json",
        "paths",
        "--graph",
        graph.to_str().unwrap(),
        "--entities",
        "hoarse voice,laryngitis",
        "--top-k",
        "3",
    ]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["selected"].as_array().unwrap().len(), 3);
}

#[test]
fn no_kg_mode_answers_without_context() {
    let graph = fixtures().join("toy_medical_kg.tsv");
    let mock = fixtures().join("mock_responses.json");
    let out = rok(&[
        "--json",
        "answer",
        "--graph",
        graph.to_str().unwrap(),
        "--question",
        "I have a hoarse voice.",
        "--mock-file",
        mock.to_str().unwrap(),
        "--no-kg",
    ]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["transcript"].as_array().unwrap().len(), 1);
    assert_eq!(v["transcript"][0]["template"], "final_answer");
    assert_eq!(v["main_paths"].as_array().unwrap().len(), 0);
}
