//! Drives the coder REST API in-process: list records, request suggestions
//! and store a coder's selection. Pass `--serve` to listen on the configured
//! address instead.
//!
//! ```text
//! cargo run --example coder_service
//! cargo run --example coder_service -- --serve
//! ```

use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use medcoder::config::AppConfig;
use medcoder::evalkit::{load_records, SchemaMapping};
use medcoder::pipeline::Mode;
use medcoder::service::{router, serve, AppState, ServiceOptions, TOP_CODES};
use serde_json::{json, Value};
use tower::ServiceExt;

async fn call(app: &axum::Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = req.body(body.map_or(Body::empty(), |b| Body::from(b.to_string()))).unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let mut config = AppConfig::load(dir.join("medcoder.toml"))?;
    config.pipeline.mode = Mode::Full;
    config.pipeline.k = config.pipeline.k.max(TOP_CODES);
    let records = load_records(config.service.records.as_ref().ok_or("service.records is unset")?, &SchemaMapping::default())?;

    let selections = std::env::temp_dir().join(format!("medcoder-selections-{}.jsonl", std::process::id()));
    let mut options = ServiceOptions::new(&selections);
    options.pipeline_config = config.pipeline.clone();
    let state = Arc::new(AppState::new(config.pipeline()?, records, options)?);

    if std::env::args().any(|a| a == "--serve") {
        let addr = config.service.addr.parse()?;
        println!("listening on http://{addr}");
        serve(addr, state).await?;
        return Ok(());
    }

    let app = router(state);
    let (_, listing) = call(&app, "GET", "/api/records", None).await;
    println!("{} records", listing.as_array().map_or(0, Vec::len));

    let (status, set) = call(&app, "POST", "/api/records/ea-depression/suggest", None).await;
    println!("suggest -> {status}");
    for s in set["suggestions"].as_array().into_iter().flatten() {
        let codes: Vec<&str> = s["top_codes"].as_array().unwrap().iter().filter_map(|c| c["code"].as_str()).collect();
        println!("  {} -> {:?}", s["diagnosis"], codes);
    }

    let choice = json!({"diagnosis_index": 0, "chosen_codes": ["F32.A"], "coder_id": "example"});
    let (status, saved) = call(&app, "POST", "/api/records/ea-depression/selections", Some(choice)).await;
    println!("select -> {status} {saved}");
    let _ = std::fs::remove_file(&selections);
    Ok(())
}
