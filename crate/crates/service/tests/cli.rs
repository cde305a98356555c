mod common;

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

use common::{fixture, GOLDEN_QUESTION};

fn citeqa(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_citeqa"));
    cmd.args(args);
    for (k, _) in std::env::vars().filter(|(k, _)| k.starts_with("CITEQA_")) {
        cmd.env_remove(k);
    }
    cmd.envs(env.iter().copied());
    cmd.output().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn index_then_ask_from_saved_indices() {
    let dir = tempfile::tempdir().unwrap();
    let config = fixture("golden/citeqa.toml");
    let (lex, vec) = (dir.path().join("idx/lexical.txt"), dir.path().join("idx/vectors.txt"));
    ok(&citeqa(
        &[
            "--config",
            p(&config),
            "index",
            "--lexical-out",
            p(&lex),
            "--vectors-out",
            p(&vec),
        ],
        &[],
    ));
    assert!(lex.exists() && vec.exists());

    let env = [("CITEQA_INDEX_LEXICAL", p(&lex)), ("CITEQA_INDEX_VECTORS", p(&vec))];
    let out = ok(&citeqa(&["--config", p(&config), "ask", GOLDEN_QUESTION], &env));
    let expected = std::fs::read_to_string(fixture("golden/expected_response.json")).unwrap();
    assert_eq!(out, expected);
}

#[test]
fn ask_with_stopwords_fails_cleanly() {
    let out = citeqa(
        &["--config", p(&fixture("golden/citeqa.toml")), "ask", "what is the"],
        &[],
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("retrieval"));
}

#[test]
fn verify_reports_one_line_per_claim() {
    let g = fixture("golden");
    let backend = format!("scripted:{}", g.join("nli.jsonl").display());
    let out = ok(&citeqa(
        &[
            "verify",
            "--answer-file",
            p(&g.join("answer.txt")),
            "--corpus",
            p(&g.join("corpus.jsonl")),
            "--backend",
            &backend,
        ],
        &[],
    ));
    let rows: Vec<Value> = out.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let statuses: Vec<&str> = rows.iter().map(|r| r["status"].as_str().unwrap()).collect();
    assert_eq!(statuses, ["UNREFERENCED", "VERIFIED", "FLAGGED_CONTRADICTION"]);
    assert_eq!(rows[2]["verdicts"][0]["reference"], "665544");
    assert_eq!(rows[1]["highlights"][0]["sentences"][0]["sentence_index"], 1);

    // the baseline backend with a context that omits 665544
    let out = ok(&citeqa(
        &[
            "verify",
            "--answer-file",
            p(&g.join("answer.txt")),
            "--corpus",
            p(&g.join("corpus.jsonl")),
            "--backend",
            "baseline",
            "--context",
            "554433,778899",
        ],
        &[],
    ));
    let rows: Vec<Value> = out.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows[2]["status"], "FLAGGED_NO_EVIDENCE");
    assert_eq!(rows[2]["verdicts"][0]["unknown_source"], true);
}

#[test]
fn eval_scifact_writes_table_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let s = fixture("scifact");
    let out_path = dir.path().join("report/scifact.json");
    let out = ok(&citeqa(
        &[
            "eval-scifact",
            "--claims",
            p(&s.join("claims.jsonl")),
            "--corpus",
            p(&s.join("corpus.jsonl")),
            "--backend",
            "baseline",
            "--out",
            p(&out_path),
        ],
        &[],
    ));
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[4].starts_with("Weighted Avg"));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(report["dataset"]["raw_pairs"], 12);
    assert_eq!(report["dataset"]["scored_pairs"], 9);
    assert_eq!(report["dataset"]["rejected_records"], 1);
    assert_eq!(report["metrics"]["rows"].as_array().unwrap().len(), 4);
}

#[test]
fn export_feedback_filters_by_kind() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("fb.jsonl");
    let s = citeqa_core::feedback::FeedbackStore::open(&store).unwrap();
    let base = citeqa_core::feedback::NewFeedback {
        kind: citeqa_core::feedback::FeedbackKind::VerdictOverride,
        question: "q?".into(),
        answer_text: "Claim one (PUBMED:1).".into(),
        claim_index: Some(0),
        original_value: "SUPPORT".into(),
        corrected_value: "CONTRADICT".into(),
        context_doc_ids: vec!["1".into()],
        doc_id: Some("1".into()),
        claim_text: Some("Claim one.".into()),
        premise: Some("T A.".into()),
        answer_id: None,
        user_tag: None,
    };
    s.record(base.clone()).unwrap();
    s.record(citeqa_core::feedback::NewFeedback {
        kind: citeqa_core::feedback::FeedbackKind::AnswerEdit,
        original_value: "a".into(),
        corrected_value: "b".into(),
        ..base
    })
    .unwrap();
    drop(s);
    let out = dir.path().join("nli.jsonl");
    ok(&citeqa(
        &[
            "export-feedback",
            "--kind",
            "VERDICT_OVERRIDE",
            "--out",
            p(&out),
            "--feedback",
            p(&store),
        ],
        &[],
    ));
    let (pairs, errors) = citeqa_core::scifact::load_pairs(&out).unwrap();
    assert!(errors.is_empty());
    assert_eq!(pairs.len(), 1);
    assert_eq!(pairs[0].gold_label, citeqa_core::Label::Contradict);

    let all = dir.path().join("all.jsonl");
    let env = [("CITEQA_FEEDBACK_PATH", p(&store))];
    ok(&citeqa(&["export-feedback", "--out", p(&all)], &env));
    assert_eq!(std::fs::read_to_string(&all).unwrap().lines().count(), 2);

    let bad = citeqa(
        &[
            "export-feedback",
            "--kind",
            "NOPE",
            "--out",
            p(&all),
            "--feedback",
            p(&store),
        ],
        &[],
    );
    assert!(!bad.status.success());
}

#[test]
fn invalid_config_is_rejected_at_startup() {
    let out = citeqa(
        &["--config", p(&fixture("golden/citeqa.toml")), "ask", GOLDEN_QUESTION],
        &[("CITEQA_RETRIEVAL_LEXICAL_WEIGHT", "2")],
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("lexical_weight"));
}
