//! JSON API over a [`ValidationStore`], consumed by the validator UI.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use framekit::validate::{ValidationDecision, ValidationError, ValidationStore};
use framekit::{Annotation, Corpus, Frame};
use serde::{Deserialize, Serialize};
use serde_json::json;

pub struct AppState {
    pub store: ValidationStore,
    /// Posts that uploaded proposals may refer to.
    pub corpus: Corpus,
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/batches", post(upload_batch))
        .route("/api/queue/next", get(queue_next))
        .route("/api/decisions", post(submit_decision))
        .route("/api/stats", get(stats))
        .route("/api/export", get(export))
        .route("/api/frames", get(frames))
        .with_state(state)
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: Arc<AppState>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}

/// Starts the service on its own runtime thread and returns the bound address.
/// The server lives until the process exits.
pub fn spawn_background(state: Arc<AppState>, bind: &str) -> std::io::Result<SocketAddr> {
    let listener = std::net::TcpListener::bind(bind)?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build().expect("runtime");
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener).expect("listener");
            let _ = serve(listener, state, std::future::pending()).await;
        });
    });
    Ok(addr)
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

impl From<ValidationError> for ApiError {
    fn from(e: ValidationError) -> Self {
        let status = match &e {
            ValidationError::UnknownItem(_) => StatusCode::NOT_FOUND,
            ValidationError::NotLeasedToYou(_) => StatusCode::CONFLICT,
            ValidationError::InvalidDecision(_)
            | ValidationError::UnresolvedPost(_)
            | ValidationError::NotLlmProposal(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ValidationError::LogCorrupt { .. } | ValidationError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ValidationError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map_err(ApiError::from)
}

/// Body: annotation JSONL, one LLM proposal per line.
async fn upload_batch(State(state): State<Arc<AppState>>, body: String) -> Result<Json<serde_json::Value>, ApiError> {
    let mut proposals = Vec::new();
    for (i, line) in body.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let a: Annotation = serde_json::from_str(line)
            .map_err(|e| ApiError(StatusCode::UNPROCESSABLE_ENTITY, format!("line {}: {e}", i + 1)))?;
        a.validate().map_err(|e| ApiError(StatusCode::UNPROCESSABLE_ENTITY, format!("line {}: {e}", i + 1)))?;
        proposals.push(a);
    }
    let st = state.clone();
    let enqueued = blocking(move || st.store.enqueue(&proposals, &st.corpus)).await?;
    Ok(Json(json!({ "enqueued": enqueued, "items_total": state.store.len() })))
}

#[derive(Deserialize)]
struct NextQuery {
    annotator: String,
}

async fn queue_next(State(state): State<Arc<AppState>>, Query(q): Query<NextQuery>) -> Result<Response, ApiError> {
    if q.annotator.trim().is_empty() {
        return Err(ApiError(StatusCode::BAD_REQUEST, "annotator id is empty".into()));
    }
    let item = blocking(move || state.store.lease_next(&q.annotator)).await?;
    Ok(match item {
        Some(item) => Json(item).into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    })
}

async fn submit_decision(
    State(state): State<Arc<AppState>>,
    Json(decision): Json<ValidationDecision>,
) -> Result<Json<Annotation>, ApiError> {
    Ok(Json(blocking(move || state.store.submit_decision(&decision)).await?))
}

#[derive(Deserialize)]
struct StatsQuery {
    baseline: Option<f64>,
}

async fn stats(State(state): State<Arc<AppState>>, Query(q): Query<StatsQuery>) -> Result<Response, ApiError> {
    if let Some(b) = q.baseline {
        if !(b.is_finite() && b > 0.0) {
            return Err(ApiError(StatusCode::BAD_REQUEST, "baseline must be a positive number of seconds".into()));
        }
    }
    Ok(Json(state.store.stats(q.baseline)).into_response())
}

async fn export(State(state): State<Arc<AppState>>) -> Response {
    ([(header::CONTENT_TYPE, "application/x-ndjson")], state.store.export_jsonl()).into_response()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameInfo {
    pub tag: String,
    pub name: String,
    pub long_name: String,
    pub theme: String,
    pub definition: String,
}

pub fn frame_registry() -> Vec<FrameInfo> {
    Frame::ALL
        .iter()
        .map(|f| FrameInfo {
            tag: f.prompt_tag().into(),
            name: f.canonical_name().into(),
            long_name: f.long_name().into(),
            theme: f.theme().name().into(),
            definition: f.definition().into(),
        })
        .collect()
}

async fn frames() -> Json<Vec<FrameInfo>> {
    Json(frame_registry())
}
