//! HTTP API for the coder UI: record browsing, suggestions with highlight
//! spans, and persisted coder selections.

mod store;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::extract::{Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use serde::{Deserialize, Serialize};

pub use store::{parse_manual_codes, validate_codes, LoadedSelections, Selection, SelectionStore, StoreError};

use crate::grounding::GroundedSpan;
use crate::pipeline::{MedicalRecord, Mode, Pipeline, PipelineConfig, PipelineError};
use crate::extractor::ExtractError;
use crate::retriever::CandidateSource;

/// Codes shown per diagnosis dropdown.
pub const TOP_CODES: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestedCode {
    pub code: String,
    pub description: String,
    pub source: CandidateSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retrieval_score: Option<f64>,
    pub rank: usize,
}

/// Every span satisfies `record_text[start..end] == text`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suggestion {
    pub record_id: String,
    pub diagnosis_index: usize,
    pub diagnosis: String,
    pub diagnosis_span: GroundedSpan,
    pub evidence_spans: Vec<GroundedSpan>,
    /// At most [`TOP_CODES`].
    pub top_codes: Vec<SuggestedCode>,
    pub rerank_repaired: bool,
    pub rerank_fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestionSet {
    pub record_id: String,
    pub config_hash: String,
    pub suggestions: Vec<Suggestion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: String,
    pub message: String,
    #[serde(skip)]
    pub status: u16,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            code: code.to_string(),
            message: message.into(),
            status: status.as_u16(),
        }
    }

    fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("unknown record {id}"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

#[derive(Debug, Clone)]
pub struct ServiceOptions {
    pub pipeline_config: PipelineConfig,
    pub selections_path: PathBuf,
    /// Built UI bundle served under `/`.
    pub static_dir: Option<PathBuf>,
    /// When set, `/api` requests need `Authorization: Bearer <token>`.
    pub bearer_token: Option<String>,
}

impl ServiceOptions {
    pub fn new(selections_path: impl Into<PathBuf>) -> Self {
        Self {
            pipeline_config: PipelineConfig {
                mode: Mode::Full,
                k: TOP_CODES,
                ..PipelineConfig::default()
            },
            selections_path: selections_path.into(),
            static_dir: None,
            bearer_token: None,
        }
    }
}

/// Shared by all handlers. Suggestions are cached per (record, config hash).
pub struct AppState {
    pipeline: Pipeline,
    config: PipelineConfig,
    config_hash: String,
    records: BTreeMap<String, MedicalRecord>,
    cache: Mutex<HashMap<(String, String), Arc<SuggestionSet>>>,
    running: Mutex<HashSet<String>>,
    store: SelectionStore,
    bearer_token: Option<String>,
    static_dir: Option<PathBuf>,
}

impl AppState {
    pub fn new(pipeline: Pipeline, records: Vec<MedicalRecord>, options: ServiceOptions) -> Result<Self, StoreError> {
        let config_hash = pipeline.config_hash(&options.pipeline_config);
        Ok(Self {
            pipeline,
            config: options.pipeline_config,
            config_hash,
            records: records.into_iter().map(|r| (r.record_id.clone(), r)).collect(),
            cache: Mutex::new(HashMap::new()),
            running: Mutex::new(HashSet::new()),
            store: SelectionStore::open(options.selections_path)?,
            bearer_token: options.bearer_token,
            static_dir: options.static_dir,
        })
    }

    fn cached(&self, id: &str) -> Option<Arc<SuggestionSet>> {
        self.cache
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .get(&(id.to_string(), self.config_hash.clone()))
            .cloned()
    }

    fn is_running(&self, id: &str) -> bool {
        self.running.lock().unwrap_or_else(|e| e.into_inner()).contains(id)
    }
}

/// Removes the record from the running set on drop.
struct RunningGuard {
    state: Arc<AppState>,
    id: String,
}

impl Drop for RunningGuard {
    fn drop(&mut self) {
        self.state.running.lock().unwrap_or_else(|e| e.into_inner()).remove(&self.id);
    }
}

pub fn build_suggestions(result: &crate::pipeline::PredictionResult, pipeline: &Pipeline) -> Vec<Suggestion> {
    let ontology = pipeline.ontology();
    result
        .per_diagnosis
        .iter()
        .enumerate()
        .map(|(i, d)| Suggestion {
            record_id: result.record_id.clone(),
            diagnosis_index: i,
            diagnosis: d.extraction.diagnosis.clone(),
            diagnosis_span: d.extraction.diagnosis_span.clone(),
            evidence_spans: d
                .extraction
                .evidence
                .iter()
                .filter(|e| e.span.grounded)
                .map(|e| e.span.clone())
                .collect(),
            top_codes: d
                .full_ranking
                .codes
                .iter()
                .take(TOP_CODES)
                .map(|c| SuggestedCode {
                    code: c.code.clone(),
                    description: ontology.description(&c.code).unwrap_or_default().to_string(),
                    source: c.source,
                    retrieval_score: c.retrieval_score,
                    rank: c.rank,
                })
                .collect(),
            rerank_repaired: d.full_ranking.repaired,
            rerank_fallback: d.full_ranking.fallback,
        })
        .collect()
}

pub fn router(state: Arc<AppState>) -> Router {
    let api = Router::new()
        .route("/records", get(list_records))
        .route("/records/{id}", get(get_record))
        .route("/records/{id}/suggest", post(suggest))
        .route("/records/{id}/suggestions", get(get_suggestions))
        .route("/records/{id}/selections", post(post_selection).get(get_selections))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token));
    let mut app = Router::new()
        .route("/healthz", get(|| async { "ok" }))
        .nest("/api", api)
        .with_state(state.clone());
    if let Some(dir) = &state.static_dir {
        app = app.fallback_service(tower_http::services::ServeDir::new(dir));
    }
    app
}

async fn require_token(State(state): State<Arc<AppState>>, req: Request, next: Next) -> Response {
    if let Some(token) = &state.bearer_token {
        let ok = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .is_some_and(|t| t == token);
        if !ok {
            return ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or wrong bearer token").into_response();
        }
    }
    next.run(req).await
}

#[derive(Debug, Serialize)]
struct RecordSummary {
    record_id: String,
    status: &'static str,
    selections: usize,
}

async fn list_records(State(state): State<Arc<AppState>>) -> Result<Json<Vec<RecordSummary>>, ApiError> {
    let loaded = load_store(&state).await?;
    let view = loaded.view();
    Ok(Json(
        state
            .records
            .keys()
            .map(|id| RecordSummary {
                record_id: id.clone(),
                status: if state.is_running(id) {
                    "running"
                } else if state.cached(id).is_some() {
                    "suggested"
                } else {
                    "new"
                },
                selections: view.keys().filter(|(r, _)| r == id).count(),
            })
            .collect(),
    ))
}

async fn get_record(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<MedicalRecord>, ApiError> {
    state.records.get(&id).cloned().map(Json).ok_or_else(|| ApiError::not_found(&id))
}

#[derive(Debug, Default, Deserialize)]
struct SuggestQuery {
    #[serde(default)]
    force: bool,
}

async fn suggest(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<SuggestQuery>,
) -> Result<Json<SuggestionSet>, ApiError> {
    let record = state.records.get(&id).cloned().ok_or_else(|| ApiError::not_found(&id))?;
    if !q.force {
        if let Some(hit) = state.cached(&id) {
            return Ok(Json((*hit).clone()));
        }
    }
    if !state.running.lock().unwrap_or_else(|e| e.into_inner()).insert(id.clone()) {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "suggest_running",
            format!("suggestions for {id} are already being computed"),
        ));
    }
    let guard = RunningGuard {
        state: state.clone(),
        id: id.clone(),
    };
    let worker = state.clone();
    let outcome = tokio::task::spawn_blocking(move || {
        let _guard = guard;
        worker
            .pipeline
            .run_record(&record, &worker.config)
            .map(|r| build_suggestions(&r, &worker.pipeline))
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?;
    match outcome {
        Ok(suggestions) => {
            let set = Arc::new(SuggestionSet {
                record_id: id.clone(),
                config_hash: state.config_hash.clone(),
                suggestions,
            });
            state
                .cache
                .lock()
                .unwrap_or_else(|e| e.into_inner())
                .insert((id, state.config_hash.clone()), set.clone());
            Ok(Json((*set).clone()))
        }
        Err(e) => Err(pipeline_error(&state, &id, e)),
    }
}

fn pipeline_error(state: &AppState, id: &str, e: PipelineError) -> ApiError {
    let audit = format!("record={id} config={}", &state.config_hash[..12]);
    tracing::error!(record = id, error = %e, "suggest failed");
    match e {
        PipelineError::Extract(ExtractError::EmptyRecord) => {
            ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "empty_record", e.to_string())
        }
        PipelineError::Extract(_) | PipelineError::Retrieve(_) | PipelineError::RecordTooLong { .. } => {
            ApiError::new(StatusCode::BAD_GATEWAY, "provider_failure", format!("{e} ({audit})"))
        }
        other => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", format!("{other} ({audit})")),
    }
}

async fn get_suggestions(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<SuggestionSet>, ApiError> {
    if !state.records.contains_key(&id) {
        return Err(ApiError::not_found(&id));
    }
    state.cached(&id).map(|s| Json((*s).clone())).ok_or_else(|| {
        ApiError::new(StatusCode::NOT_FOUND, "no_suggestions", format!("no suggestions computed for {id}"))
    })
}

/// Either `chosen_codes` or a comma-separated `manual` entry.
#[derive(Debug, Clone, Default, Deserialize, Serialize)]
pub struct SelectionRequest {
    #[serde(default)]
    pub diagnosis_index: Option<usize>,
    #[serde(default)]
    pub chosen_codes: Option<Vec<String>>,
    #[serde(default)]
    pub manual: Option<String>,
    #[serde(default)]
    pub coder_id: Option<String>,
}

fn store_error(e: StoreError) -> ApiError {
    match e {
        StoreError::InvalidCodes(_) | StoreError::EmptySelection => {
            ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_selection", e.to_string())
        }
        StoreError::Io { .. } => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "store", e.to_string()),
    }
}

async fn load_store(state: &Arc<AppState>) -> Result<LoadedSelections, ApiError> {
    let s = state.clone();
    tokio::task::spawn_blocking(move || s.store.load())
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
        .map_err(store_error)
}

async fn post_selection(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(body): Json<SelectionRequest>,
) -> Result<Json<Selection>, ApiError> {
    if !state.records.contains_key(&id) {
        return Err(ApiError::not_found(&id));
    }
    let (chosen_codes, entered_manually) = match (&body.chosen_codes, &body.manual) {
        (Some(codes), None) => (validate_codes(codes.iter().map(String::as_str)).map_err(store_error)?, false),
        (None, Some(manual)) => (parse_manual_codes(manual).map_err(store_error)?, true),
        _ => {
            return Err(ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "invalid_selection",
                "give exactly one of chosen_codes or manual",
            ))
        }
    };
    let selection = Selection {
        record_id: id,
        diagnosis_index: body.diagnosis_index,
        chosen_codes,
        entered_manually,
        timestamp: Utc::now(),
        coder_id: body.coder_id.unwrap_or_else(|| "anonymous".into()),
    };
    let s = state.clone();
    let stored = selection.clone();
    tokio::task::spawn_blocking(move || s.store.append(&stored))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
        .map_err(store_error)?;
    Ok(Json(selection))
}

async fn get_selections(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<Vec<Selection>>, ApiError> {
    if !state.records.contains_key(&id) {
        return Err(ApiError::not_found(&id));
    }
    Ok(Json(load_store(&state).await?.latest_for_record(&id)))
}

/// Serves until ctrl-c.
pub async fn serve(addr: SocketAddr, state: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "coder service listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
