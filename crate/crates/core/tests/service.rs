mod common;

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use medcoder::llm::{FnProvider, LlmError, LlmProvider};
use medcoder::pipeline::{MedicalRecord, Pipeline};
use medcoder::service::{router, AppState, ServiceOptions, SuggestionSet, TOP_CODES};
use serde_json::{json, Value};
use tower::ServiceExt;

fn records() -> Vec<MedicalRecord> {
    common::ablation().medical_records()
}

fn app_with(pipeline: Pipeline, options: ServiceOptions) -> (Router, Arc<AppState>) {
    let state = Arc::new(AppState::new(pipeline, records(), options).unwrap());
    (router(state.clone()), state)
}

fn app(dir: &tempfile::TempDir) -> Router {
    app_with(common::offline_pipeline(), ServiceOptions::new(dir.path().join("sel.jsonl"))).0
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header(header::CONTENT_TYPE, "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()));
    (status, value)
}

#[tokio::test]
async fn health_and_record_listing() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir);
    assert_eq!(call(&app, Method::GET, "/healthz", None).await, (StatusCode::OK, Value::String("ok".into())));
    let (status, list) = call(&app, Method::GET, "/api/records", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(list.as_array().unwrap().len(), 20);
    assert_eq!(list[0]["status"], "new");
    let (status, rec) = call(&app, Method::GET, "/api/records/ea-depression", None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(rec["text"].as_str().unwrap().contains("well managed on Effexor"));
}

#[tokio::test]
async fn unknown_record_is_404() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir);
    for (method, uri) in [
        (Method::GET, "/api/records/nope"),
        (Method::POST, "/api/records/nope/suggest"),
        (Method::GET, "/api/records/nope/suggestions"),
        (Method::GET, "/api/records/nope/selections"),
    ] {
        let (status, body) = call(&app, method, uri, None).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{uri}");
        assert_eq!(body["code"], "not_found");
    }
    let (status, body) = call(&app, Method::GET, "/api/records/ea-depression/suggestions", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["code"], "no_suggestions");
}

#[tokio::test]
async fn suggestions_rank_the_unspecified_depression_code_first() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir);
    let (status, body) = call(&app, Method::POST, "/api/records/ea-depression/suggest", None).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let set: SuggestionSet = serde_json::from_value(body).unwrap();
    assert_eq!(set.suggestions.len(), 1);
    let s = &set.suggestions[0];
    assert_eq!(s.top_codes[0].code, "F32.A");
    assert_eq!(s.top_codes[0].description, "Depression, unspecified");
    assert!(s.top_codes.len() <= TOP_CODES);
    assert!(s.top_codes.iter().any(|c| c.code == "F32.9"));

    let text = records().into_iter().find(|r| r.record_id == "ea-depression").unwrap().text;
    assert!(s.diagnosis_span.grounded && s.diagnosis_span.is_valid_for(&text));
    assert_eq!(s.diagnosis_span.text, "depression");
    assert!(!s.evidence_spans.is_empty());
    assert!(s.evidence_spans.iter().all(|e| e.is_valid_for(&text)));

    let (status, cached) = call(&app, Method::GET, "/api/records/ea-depression/suggestions", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(serde_json::from_value::<SuggestionSet>(cached).unwrap(), set);
    let (_, list) = call(&app, Method::GET, "/api/records", None).await;
    let row = list.as_array().unwrap().iter().find(|r| r["record_id"] == "ea-depression").unwrap();
    assert_eq!(row["status"], "suggested");
}

#[tokio::test]
async fn every_fixture_record_gets_valid_suggestions() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir);
    for record in records() {
        let (status, body) = call(&app, Method::POST, &format!("/api/records/{}/suggest", record.record_id), None).await;
        assert_eq!(status, StatusCode::OK, "{}: {body}", record.record_id);
        let set: SuggestionSet = serde_json::from_value(body).unwrap();
        for s in &set.suggestions {
            assert!(!s.diagnosis_span.grounded || s.diagnosis_span.is_valid_for(&record.text));
            assert!(s.evidence_spans.iter().all(|e| e.grounded && e.is_valid_for(&record.text)));
            assert!(s.top_codes.len() <= TOP_CODES);
            let ranks: Vec<usize> = s.top_codes.iter().map(|c| c.rank).collect();
            assert_eq!(ranks, (1..=s.top_codes.len()).collect::<Vec<_>>());
        }
    }
}

#[tokio::test]
async fn selections_survive_a_restart() {
    let dir = tempfile::tempdir().unwrap();
    let first = app(&dir);
    let pick = json!({"diagnosis_index": 0, "chosen_codes": ["M75.42"], "coder_id": "c7"});
    let (status, saved) = call(&first, Method::POST, "/api/records/ea-shoulder-impingement/selections", Some(pick)).await;
    assert_eq!(status, StatusCode::OK, "{saved}");
    assert_eq!(saved["entered_manually"], false);
    let manual = json!({"diagnosis_index": 1, "manual": "S80.01XA, m7542"});
    let (status, saved) = call(&first, Method::POST, "/api/records/ea-shoulder-impingement/selections", Some(manual)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(saved["chosen_codes"], json!(["S80.01XA", "M75.42"]));
    assert_eq!(saved["entered_manually"], true);
    drop(first);

    let second = app(&dir);
    let (status, list) = call(&second, Method::GET, "/api/records/ea-shoulder-impingement/selections", None).await;
    assert_eq!(status, StatusCode::OK);
    let list = list.as_array().unwrap();
    assert_eq!(list.len(), 2);
    assert_eq!(list[0]["chosen_codes"], json!(["M75.42"]));
    assert_eq!(list[0]["coder_id"], "c7");
    assert_eq!(list[1]["diagnosis_index"], 1);

    // A later selection for the same diagnosis replaces the earlier one in the view.
    let again = json!({"diagnosis_index": 0, "chosen_codes": ["M75.41"]});
    call(&second, Method::POST, "/api/records/ea-shoulder-impingement/selections", Some(again)).await;
    let (_, list) = call(&second, Method::GET, "/api/records/ea-shoulder-impingement/selections", None).await;
    assert_eq!(list.as_array().unwrap().len(), 2);
    assert_eq!(list[0]["chosen_codes"], json!(["M75.41"]));
}

#[tokio::test]
async fn invalid_selections_are_422() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir);
    let uri = "/api/records/ea-depression/selections";
    for body in [
        json!({"chosen_codes": ["BADCODE"]}),
        json!({"manual": "notacode"}),
        json!({"manual": " , "}),
        json!({"chosen_codes": []}),
        json!({"chosen_codes": ["F32.A"], "manual": "F32.A"}),
        json!({}),
    ] {
        let (status, resp) = call(&app, Method::POST, uri, Some(body.clone())).await;
        assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{body}");
        assert_eq!(resp["code"], "invalid_selection");
    }
    let (_, resp) = call(&app, Method::POST, uri, Some(json!({"chosen_codes": ["F32.A", "BADCODE"]}))).await;
    assert!(resp["message"].as_str().unwrap().contains("BADCODE"));
    let (_, list) = call(&app, Method::GET, uri, None).await;
    assert_eq!(list, json!([]));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn concurrent_suggest_is_409() {
    let dir = tempfile::tempdir().unwrap();
    let release = Arc::new(AtomicBool::new(false));
    let replay: Arc<dyn LlmProvider> = Arc::new(medcoder::llm::MockProvider::from_file(
        common::fixtures_dir().join("llm/responses.json"),
    )
    .unwrap());
    let gate = release.clone();
    let slow = FnProvider::new("slow", move |req| {
        while !gate.load(Ordering::SeqCst) {
            std::thread::sleep(Duration::from_millis(5));
        }
        replay.complete(req).map(|r| r.text)
    });
    let (app, _state) = app_with(
        common::pipeline_with_llm(Arc::new(slow)),
        ServiceOptions::new(dir.path().join("sel.jsonl")),
    );
    let first = {
        let app = app.clone();
        tokio::spawn(async move { call(&app, Method::POST, "/api/records/ea-knee-contusion/suggest", None).await })
    };
    let mut running = false;
    for _ in 0..400 {
        let (_, list) = call(&app, Method::GET, "/api/records", None).await;
        if list.as_array().unwrap().iter().any(|r| r["status"] == "running") {
            running = true;
            break;
        }
        tokio::time::sleep(Duration::from_millis(5)).await;
    }
    assert!(running, "first suggest never started");
    let (status, body) = call(&app, Method::POST, "/api/records/ea-knee-contusion/suggest", None).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["code"], "suggest_running");
    release.store(true, Ordering::SeqCst);
    let (status, body) = first.await.unwrap();
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["suggestions"][0]["top_codes"][0]["code"], "S80.01XA");
    let (status, _) = call(&app, Method::POST, "/api/records/ea-knee-contusion/suggest?force=true", None).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn provider_failure_is_502_with_audit_reference() {
    let dir = tempfile::tempdir().unwrap();
    let down = FnProvider::new("down", |_| Err(LlmError::Unavailable("maintenance".into())));
    let (app, _) = app_with(common::pipeline_with_llm(Arc::new(down)), ServiceOptions::new(dir.path().join("s.jsonl")));
    let (status, body) = call(&app, Method::POST, "/api/records/ea-depression/suggest", None).await;
    assert_eq!(status, StatusCode::BAD_GATEWAY);
    assert_eq!(body["code"], "provider_failure");
    let msg = body["message"].as_str().unwrap();
    assert!(msg.contains("record=ea-depression config="), "{msg}");
    let (status, _) = call(&app, Method::GET, "/api/records/ea-depression/suggestions", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn bearer_token_guards_the_api_only() {
    let dir = tempfile::tempdir().unwrap();
    let mut options = ServiceOptions::new(dir.path().join("s.jsonl"));
    options.bearer_token = Some("s3cret".into());
    let (app, _) = app_with(common::offline_pipeline(), options);
    assert_eq!(call(&app, Method::GET, "/healthz", None).await.0, StatusCode::OK);
    let (status, body) = call(&app, Method::GET, "/api/records", None).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    assert_eq!(body["code"], "unauthorized");
    let req = Request::get("/api/records")
        .header(header::AUTHORIZATION, "Bearer s3cret")
        .body(Body::empty())
        .unwrap();
    assert_eq!(app.oneshot(req).await.unwrap().status(), StatusCode::OK);
}

#[tokio::test]
async fn static_bundle_is_served() {
    let dir = tempfile::tempdir().unwrap();
    let ui = dir.path().join("ui");
    std::fs::create_dir(&ui).unwrap();
    std::fs::write(ui.join("index.html"), "<html>coder</html>").unwrap();
    let mut options = ServiceOptions::new(dir.path().join("s.jsonl"));
    options.static_dir = Some(ui);
    let (app, _) = app_with(common::offline_pipeline(), options);
    let (status, body) = call(&app, Method::GET, "/index.html", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, Value::String("<html>coder</html>".into()));
    let (status, _) = call(&app, Method::GET, "/", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(call(&app, Method::GET, "/api/records", None).await.0, StatusCode::OK);
}
