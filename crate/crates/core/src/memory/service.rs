//! HTTP front of the memory agent.

use std::sync::Arc;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;

use super::{MemoryBackend, MemoryError, RememberRequest, SearchResult, DEFAULT_K};
use crate::serve::{spawn_router, ServerHandle};

pub type MemoryServiceHandle = ServerHandle;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchRequest {
    pub query: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
}

/// One result on the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    #[serde(default)]
    pub id: String,
    pub text: String,
    pub date: NaiveDate,
    pub score: f64,
    #[serde(default)]
    pub speaker: String,
    #[serde(default)]
    pub source_dia_id: String,
}

impl From<&SearchResult> for SearchHit {
    fn from(r: &SearchResult) -> Self {
        Self {
            id: r.record.id.clone(),
            text: r.record.text.clone(),
            date: r.record.date,
            score: r.score,
            speaker: r.record.speaker.clone(),
            source_dia_id: r.record.source_dia_id.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResponse {
    pub results: Vec<SearchHit>,
}

impl IntoResponse for MemoryError {
    fn into_response(self) -> Response {
        let status = match self {
            MemoryError::BackendUnavailable(_) => StatusCode::SERVICE_UNAVAILABLE,
            MemoryError::Extraction(_) => StatusCode::BAD_GATEWAY,
            MemoryError::EmptyText | MemoryError::InvalidK => StatusCode::BAD_REQUEST,
        };
        (status, self.to_string()).into_response()
    }
}

type Shared = Arc<dyn MemoryBackend>;

/// `/remember`, `/search`, `/health`, `/stats`, `/snapshot` and `/metrics`.
pub fn memory_router(backend: Shared) -> Router {
    Router::new()
        .route("/remember", post(remember))
        .route("/search", post(search))
        .route("/health", get(|| async { "ok" }))
        .route("/stats", get(stats))
        .route("/snapshot", get(snapshot))
        .route("/metrics", get(metrics))
        .with_state(backend)
}

pub fn serve_memory(listener: TcpListener, backend: Shared) -> std::io::Result<MemoryServiceHandle> {
    spawn_router(listener, memory_router(backend))
}

async fn remember(
    State(b): State<Shared>,
    Json(req): Json<RememberRequest>,
) -> Result<Response, MemoryError> {
    Ok(Json(b.remember(&req).await?).into_response())
}

async fn search(
    State(b): State<Shared>,
    Json(req): Json<SearchRequest>,
) -> Result<Json<SearchResponse>, MemoryError> {
    let results = b.search(&req.query, req.k.unwrap_or(DEFAULT_K)).await?;
    Ok(Json(SearchResponse {
        results: results.iter().map(SearchHit::from).collect(),
    }))
}

async fn stats(State(b): State<Shared>) -> Result<Response, MemoryError> {
    Ok(Json(b.stats().await?).into_response())
}

async fn snapshot(State(b): State<Shared>) -> Result<Response, MemoryError> {
    Ok(Json(b.snapshot().await?).into_response())
}

async fn metrics(State(b): State<Shared>) -> Result<String, MemoryError> {
    let s = b.stats().await?;
    Ok(format!(
        "memory_backend {}\nmemory_records {}\nmemory_remember_calls {}\nmemory_search_calls {}\nmemory_extraction_retries {}\nmemory_skipped_turns {}\n",
        b.kind(),
        s.records,
        s.remember_calls,
        s.search_calls,
        s.extraction_retries,
        s.skipped_turns
    ))
}
