mod common;

use std::sync::Arc;

use citeqa_core::feedback::{export_training_data, read_records, FeedbackKind};
use citeqa_service::engine::{Engine, Outcome};
use citeqa_service::http::router;
use common::{dead_url, fixture, get_json, golden_config, post_json, spawn, GOLDEN_QUESTION};
use serde_json::{json, Value};

fn engine(dir: &tempfile::TempDir, env: &[(&str, &str)]) -> Arc<Engine> {
    let cfg = golden_config(&dir.path().join("feedback.jsonl"), env);
    Arc::new(Engine::from_config(cfg).unwrap())
}

fn expected_golden() -> String {
    std::fs::read_to_string(fixture("golden/expected_response.json")).unwrap()
}

#[test]
fn golden_response_is_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let e = engine(&dir, &[]);
    let a = serde_json::to_string_pretty(&e.handle_ask(GOLDEN_QUESTION).unwrap()).unwrap() + "\n";
    let b = serde_json::to_string_pretty(&e.handle_ask(GOLDEN_QUESTION).unwrap()).unwrap() + "\n";
    assert_eq!(a, expected_golden());
    assert_eq!(a, b);
}

#[test]
fn golden_statuses_and_stage_order() {
    let dir = tempfile::tempdir().unwrap();
    let resp = engine(&dir, &[]).handle_ask(GOLDEN_QUESTION).unwrap();
    let statuses: Vec<&str> = resp.claims.iter().map(|c| c.status.as_str()).collect();
    assert_eq!(statuses, ["UNREFERENCED", "VERIFIED", "FLAGGED_CONTRADICTION"]);
    let text = serde_json::to_string(&resp.timings_ms).unwrap();
    let at: Vec<usize> = ["retrieve", "generate", "parse", "verify", "total"]
        .iter()
        .map(|k| text.find(&format!("\"{k}\"")).unwrap())
        .collect();
    assert!(at.windows(2).all(|w| w[0] < w[1]), "{text}");
}

#[test]
fn live_clock_reports_nonnegative_timings() {
    let dir = tempfile::tempdir().unwrap();
    let t = engine(&dir, &[("CITEQA_SERVICE_FROZEN_CLOCK", "false")])
        .handle_ask(GOLDEN_QUESTION)
        .unwrap()
        .timings_ms;
    for v in [t.retrieve, t.generate, t.parse, t.verify] {
        assert!(v >= 0.0 && v <= t.total + 1e-3, "{t:?}");
    }
}

#[test]
fn ask_over_http_matches_engine_and_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let e = engine(&dir, &[]);
    let addr = spawn(router(e.clone()));
    let body = json!({ "question": GOLDEN_QUESTION }).to_string();
    let (s1, a) = post_json(addr, "/api/ask", &body);
    let (s2, b) = post_json(addr, "/api/ask", &body);
    assert_eq!((s1, s2), (200, 200));
    assert_eq!(a, b);
    let expected: Value = serde_json::from_str(&expected_golden()).unwrap();
    assert_eq!(a, expected);
    for id in a["claims"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|c| c["references"].as_array().unwrap())
    {
        let (status, _) = get_json(addr, &format!("/api/documents/{}", id.as_str().unwrap()));
        assert_eq!(status, 200);
    }
}

#[test]
fn question_errors_are_client_errors() {
    let dir = tempfile::tempdir().unwrap();
    let addr = spawn(router(engine(&dir, &[])));
    let (status, body) = post_json(addr, "/api/ask", r#"{"question": "the of and what"}"#);
    assert_eq!(status, 400);
    assert_eq!(body["error"]["stage"], "retrieval");
    let (status, _) = post_json(addr, "/api/ask", r#"{"question": "  "}"#);
    assert_eq!(status, 400);
    let (status, body) = post_json(addr, "/api/ask", "{not json");
    assert_eq!(status, 400);
    assert_eq!(body["error"]["stage"], "request");
}

#[test]
fn no_relevant_documents_is_an_answer() {
    let dir = tempfile::tempdir().unwrap();
    let e = engine(&dir, &[("CITEQA_EMBEDDING_BACKEND", "none")]);
    let resp = e.handle_ask("zebrafish telomerase").unwrap();
    assert_eq!(resp.outcome, Outcome::NoRelevantDocuments);
    assert!(resp.claims.is_empty() && resp.retrieved.is_empty());
}

#[test]
fn backend_failures_name_their_stage() {
    let dir = tempfile::tempdir().unwrap();
    let nli = dead_url("/nli");
    let e = engine(
        &dir,
        &[("CITEQA_VERIFICATION_BACKEND", &nli), ("CITEQA_BACKEND_ATTEMPTS", "1")],
    );
    let err = e.handle_ask(GOLDEN_QUESTION).unwrap_err();
    assert_eq!((err.status, err.stage), (502, "verification"));

    let generation = dead_url("/generate");
    let e = engine(
        &dir,
        &[
            ("CITEQA_GENERATION_BACKEND", &generation),
            ("CITEQA_BACKEND_ATTEMPTS", "2"),
        ],
    );
    let addr = spawn(router(e));
    let (status, body) = post_json(addr, "/api/ask", &json!({ "question": GOLDEN_QUESTION }).to_string());
    assert_eq!(status, 502);
    assert_eq!(body["error"]["stage"], "generation");
    let (status, health) = get_json(addr, "/api/health");
    assert_eq!(status, 200);
    assert_eq!(health["status"], "degraded");
    assert_eq!(health["generation"]["reachable"], false);
}

#[test]
fn documents_endpoint() {
    let dir = tempfile::tempdir().unwrap();
    let addr = spawn(router(engine(&dir, &[])));
    let (status, doc) = get_json(addr, "/api/documents/665544");
    assert_eq!(status, 200);
    assert_eq!(doc["title"], "Kinase signalling in triple negative breast cancer");
    assert_eq!(doc["sentences"].as_array().unwrap().len(), 3);
    assert_eq!(get_json(addr, "/api/documents/123").0, 404);
    let (status, body) = get_json(addr, "/api/documents/12a");
    assert_eq!(status, 400);
    assert_eq!(body["error"]["stage"], "documents");
}

#[test]
fn health_reports_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let addr = spawn(router(engine(&dir, &[])));
    let (status, h) = get_json(addr, "/api/health");
    assert_eq!(status, 200);
    assert_eq!(h["status"], "ok");
    assert_eq!(h["documents"], 3);
    assert_eq!(h["vectors"], 3);
    assert!(h["lexical_terms"].as_u64().unwrap() > 10);
    assert_eq!(h["verification"]["kind"], "scripted");
}

#[test]
fn feedback_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let e = engine(&dir, &[]);
    let addr = spawn(router(e.clone()));
    let (_, ask) = post_json(addr, "/api/ask", &json!({ "question": GOLDEN_QUESTION }).to_string());
    let id = ask["answer_id"].as_str().unwrap();

    let override_body = json!({
        "kind": "VERDICT_OVERRIDE",
        "answer_id": id,
        "claim_index": 1,
        "original_value": "VERIFIED",
        "corrected_value": "FLAGGED_CONTRADICTION",
        "user_tag": "reviewer-7",
    });
    let (status, ack) = post_json(addr, "/api/feedback", &override_body.to_string());
    assert_eq!(status, 201, "{ack}");
    assert_eq!(ack["record_id"], 1);

    let (status, body) = post_json(
        addr,
        "/api/feedback",
        &json!({ "kind": "OPINION", "answer_id": id }).to_string(),
    );
    assert_eq!(status, 400);
    assert_eq!(body["error"]["fields"][0]["field"], "kind");

    let (status, _) = post_json(
        addr,
        "/api/feedback",
        &json!({ "kind": "ANSWER_EDIT", "answer_id": "0000000000000000", "corrected_value": "x" }).to_string(),
    );
    assert_eq!(status, 404);

    let (status, body) = post_json(addr, "/api/feedback", &json!({ "kind": "VERDICT_OVERRIDE", "answer_id": id, "claim_index": 9, "original_value": "SUPPORT", "corrected_value": "CONTRADICT" }).to_string());
    assert_eq!(status, 400);
    assert_eq!(body["error"]["fields"][0]["field"], "claim_index");

    let edit = json!({ "kind": "ANSWER_EDIT", "answer_id": id, "corrected_value": "BRAC1 and BRAC2 are targets (PUBMED:554433)." });
    let (status, ack) = post_json(addr, "/api/feedback", &edit.to_string());
    assert_eq!((status, ack["record_id"].as_u64()), (201, Some(2)));

    let records = read_records(dir.path().join("feedback.jsonl")).unwrap();
    assert_eq!(records.len(), 2);
    let r = &records[0].feedback;
    assert_eq!(r.kind, FeedbackKind::VerdictOverride);
    assert_eq!(r.doc_id.as_deref(), Some("554433"));
    assert_eq!(r.corrected_value, "CONTRADICT");
    assert_eq!(
        r.claim_text.as_deref(),
        Some("For example BRAC1, BRAC2 are well studied targets.")
    );
    assert_eq!(records[1].feedback.original_value, ask["answer_text"].as_str().unwrap());
    // frozen clock
    assert_eq!(records[0].timestamp.timestamp(), 0);

    let nli = export_training_data(&records, Some(FeedbackKind::VerdictOverride));
    assert_eq!(nli.lines().count(), 1);
    let row: Value = serde_json::from_str(nli.lines().next().unwrap()).unwrap();
    assert_eq!(row["label"], "CONTRADICT");
    assert!(row["premise"]
        .as_str()
        .unwrap()
        .starts_with("BRCA1 and BRCA2 as therapeutic targets"));
}

#[test]
fn feedback_without_answer_id_needs_the_answer() {
    let dir = tempfile::tempdir().unwrap();
    let e = engine(&dir, &[]);
    let err = e
        .handle_feedback(serde_json::from_value(json!({ "kind": "ANSWER_EDIT", "corrected_value": "b" })).unwrap())
        .unwrap_err();
    assert_eq!(err.status, 400);
    let fields: Vec<&str> = err.fields.iter().map(|f| f.field).collect();
    assert_eq!(fields, ["question", "answer_text"]);
    let ok = e
        .handle_feedback(
            serde_json::from_value(json!({ "kind": "answer-edit", "question": "q?", "answer_text": "a.", "original_value": "a.", "corrected_value": "b." }))
                .unwrap(),
        )
        .unwrap();
    assert_eq!(ok.record_id, 1);
}
