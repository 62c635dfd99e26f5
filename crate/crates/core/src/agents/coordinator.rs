//! The coordinator: drives loading turn by turn and answers questions with
//! a fixed two-step tool sequence, `search_memory` then `answer_question`.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;

use super::responder::{AnswerRequest, AnswerResponse};
use crate::dataset::{turns_in_order, Conversation, Corpus};
use crate::memory::service::{SearchRequest, SearchResponse};
use crate::memory::{RememberOutcome, RememberRequest, DEFAULT_K};
use crate::serve::{spawn_router, ServerHandle};

pub const SEARCH_MEMORY: &str = "search_memory";
pub const ANSWER_QUESTION: &str = "answer_question";
/// Loading gives up after this many turns in a row fail.
pub const MAX_CONSECUTIVE_FAILURES: u32 = 3;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("{stage} failed: {message}")]
    Stage { stage: String, message: String },
    #[error("loading aborted after {} turns: {message}", report.turns_sent)]
    LoadAborted { report: LoadReport, message: String },
    #[error("unknown conversation {0:?}")]
    UnknownConversation(String),
    #[error("question must be non-empty")]
    EmptyQuestion,
}

impl IntoResponse for AgentError {
    fn into_response(self) -> Response {
        let status = match &self {
            AgentError::Stage { .. } | AgentError::LoadAborted { .. } => StatusCode::BAD_GATEWAY,
            AgentError::UnknownConversation(_) => StatusCode::NOT_FOUND,
            AgentError::EmptyQuestion => StatusCode::BAD_REQUEST,
        };
        (status, Json(ErrorBody::from(&self))).into_response()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<LoadReport>,
}

impl From<&AgentError> for ErrorBody {
    fn from(e: &AgentError) -> Self {
        Self {
            error: e.to_string(),
            stage: match e {
                AgentError::Stage { stage, .. } => Some(stage.clone()),
                AgentError::LoadAborted { .. } => Some("remember".into()),
                _ => None,
            },
            report: match e {
                AgentError::LoadAborted { report, .. } => Some(report.clone()),
                _ => None,
            },
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LoadReport {
    pub turns_total: u64,
    /// Turns the memory agent accepted.
    pub turns_sent: u64,
    pub records_created: u64,
    /// Turns the memory agent accepted but could not extract from.
    pub skipped: u64,
    /// Turns that failed even after a retry.
    pub failed: u64,
    pub retries: u64,
    pub wall_time_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub search_memory_ms: f64,
    pub answer_question_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AskRequest {
    pub question: String,
    #[serde(default)]
    pub conversation_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AskResponse {
    pub answer: String,
    pub retrieved_memories: String,
    pub tool_trace: Vec<String>,
    pub timings: StageTimings,
    pub retries: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadRequest {
    pub conversation_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinatorConfig {
    pub memory_url: String,
    pub responder_url: String,
    pub k: usize,
    pub timeout: Duration,
}

impl CoordinatorConfig {
    pub fn new(memory_url: impl Into<String>, responder_url: impl Into<String>) -> Self {
        Self {
            memory_url: memory_url.into(),
            responder_url: responder_url.into(),
            k: DEFAULT_K,
            timeout: Duration::from_secs(300),
        }
    }
}

/// `[YYYY-MM-DD] text` lines in result order.
pub fn format_hits(results: &SearchResponse) -> String {
    results
        .results
        .iter()
        .map(|h| format!("[{}] {}", h.date.format("%Y-%m-%d"), h.text))
        .collect::<Vec<_>>()
        .join("\n")
}

pub struct Coordinator {
    cfg: CoordinatorConfig,
    client: reqwest::Client,
    retries: AtomicU64,
    latencies: Mutex<BTreeMap<String, Vec<f64>>>,
    phase: Mutex<String>,
}

impl Coordinator {
    pub fn new(cfg: CoordinatorConfig) -> Self {
        let client = crate::serve::http_client(&cfg.memory_url, Some(cfg.timeout));
        Self {
            cfg,
            client,
            retries: AtomicU64::new(0),
            latencies: Mutex::new(BTreeMap::new()),
            phase: Mutex::new("idle".into()),
        }
    }

    pub fn config(&self) -> &CoordinatorConfig {
        &self.cfg
    }

    /// Outbound request latencies are booked under `phase` from now on.
    pub fn set_phase(&self, phase: &str) {
        *self.phase.lock().unwrap() = phase.to_string();
    }

    /// Wall time of every outbound request, per phase.
    pub fn latencies(&self) -> BTreeMap<String, Vec<f64>> {
        self.latencies.lock().unwrap().clone()
    }

    pub fn total_retries(&self) -> u64 {
        self.retries.load(Ordering::Relaxed)
    }

    async fn post<Req: Serialize, Resp: DeserializeOwned>(
        &self,
        url: &str,
        body: &Req,
    ) -> Result<Resp, String> {
        let started = Instant::now();
        let res = async {
            let r = self.client.post(url).json(body).send().await.map_err(|e| e.to_string())?;
            let status = r.status();
            if !status.is_success() {
                let text = r.text().await.unwrap_or_default();
                return Err(format!("HTTP {status}: {text}"));
            }
            r.json::<Resp>().await.map_err(|e| e.to_string())
        }
        .await;
        let phase = self.phase.lock().unwrap().clone();
        self.latencies
            .lock()
            .unwrap()
            .entry(phase)
            .or_default()
            .push(started.elapsed().as_secs_f64() * 1000.0);
        res
    }

    /// One attempt plus one retry.
    async fn post_retry<Req: Serialize, Resp: DeserializeOwned>(
        &self,
        url: &str,
        body: &Req,
        retries: &mut u32,
    ) -> Result<Resp, String> {
        match self.post(url, body).await {
            Ok(v) => Ok(v),
            Err(first) => {
                *retries += 1;
                self.retries.fetch_add(1, Ordering::Relaxed);
                tracing::warn!(url, error = %first, "retrying");
                self.post(url, body).await
            }
        }
    }

    /// Sends every turn to `/remember`, sequentially and in order.
    pub async fn load_conversation(&self, conv: &Conversation) -> Result<LoadReport, AgentError> {
        let started = Instant::now();
        let url = format!("{}/remember", self.cfg.memory_url);
        let turns = turns_in_order(conv);
        let mut report = LoadReport {
            turns_total: turns.len() as u64,
            ..LoadReport::default()
        };
        let mut consecutive = 0;
        for (session, turn) in turns {
            let req = RememberRequest {
                speaker: turn.speaker.clone(),
                text: turn.text.clone(),
                dia_id: turn.dia_id.clone(),
                session_date: session.date,
            };
            let mut retries = 0;
            let res = self.post_retry::<_, RememberOutcome>(&url, &req, &mut retries).await;
            report.retries += retries as u64;
            match res {
                Ok(out) => {
                    consecutive = 0;
                    report.turns_sent += 1;
                    report.records_created += out.ids.len() as u64;
                    report.skipped += out.skipped as u64;
                }
                Err(message) => {
                    consecutive += 1;
                    report.failed += 1;
                    if consecutive >= MAX_CONSECUTIVE_FAILURES {
                        report.wall_time_ms = started.elapsed().as_secs_f64() * 1000.0;
                        return Err(AgentError::LoadAborted { report, message });
                    }
                }
            }
        }
        report.wall_time_ms = started.elapsed().as_secs_f64() * 1000.0;
        Ok(report)
    }

    /// `search_memory` then `answer_question`. A stage that fails twice
    /// ends the question with that stage named; there is no fallback that
    /// answers without memories.
    pub async fn ask(&self, question: &str) -> Result<AskResponse, AgentError> {
        if question.trim().is_empty() {
            return Err(AgentError::EmptyQuestion);
        }
        let started = Instant::now();
        let mut retries = 0;
        let mut trace = Vec::with_capacity(2);

        trace.push(SEARCH_MEMORY.to_string());
        let t = Instant::now();
        let hits: SearchResponse = self
            .post_retry(
                &format!("{}/search", self.cfg.memory_url),
                &SearchRequest {
                    query: question.to_string(),
                    k: Some(self.cfg.k),
                },
                &mut retries,
            )
            .await
            .map_err(|message| AgentError::Stage {
                stage: SEARCH_MEMORY.into(),
                message,
            })?;
        let search_ms = t.elapsed().as_secs_f64() * 1000.0;
        let memory = format_hits(&hits);

        trace.push(ANSWER_QUESTION.to_string());
        let t = Instant::now();
        let answer: AnswerResponse = self
            .post_retry(
                &format!("{}/answer", self.cfg.responder_url),
                &AnswerRequest {
                    memory: memory.clone(),
                    question: question.to_string(),
                },
                &mut retries,
            )
            .await
            .map_err(|message| AgentError::Stage {
                stage: ANSWER_QUESTION.into(),
                message,
            })?;
        let answer_ms = t.elapsed().as_secs_f64() * 1000.0;

        Ok(AskResponse {
            answer: answer.answer,
            retrieved_memories: memory,
            tool_trace: trace,
            timings: StageTimings {
                search_memory_ms: search_ms,
                answer_question_ms: answer_ms,
                total_ms: started.elapsed().as_secs_f64() * 1000.0,
            },
            retries,
        })
    }
}

struct CoordinatorState {
    coordinator: Arc<Coordinator>,
    corpus: Arc<Corpus>,
}

fn conversation<'a>(corpus: &'a Corpus, id: &str) -> Option<&'a Conversation> {
    if let Some(e) = corpus.find(id) {
        return Some(&e.conversation);
    }
    id.parse::<usize>()
        .ok()
        .and_then(|i| corpus.entries.get(i))
        .map(|e| &e.conversation)
}

/// `POST /ask`, `POST /load`, `GET /health` and `GET /metrics`.
/// Conversations are looked up by sample id or by index into `corpus`.
pub fn coordinator_router(coordinator: Arc<Coordinator>, corpus: Arc<Corpus>) -> Router {
    let state = Arc::new(CoordinatorState { coordinator, corpus });
    Router::new()
        .route("/ask", post(ask))
        .route("/load", post(load))
        .route("/health", get(|| async { "ok" }))
        .route("/metrics", get(metrics))
        .with_state(state)
}

async fn metrics(State(s): State<Arc<CoordinatorState>>) -> String {
    let c = &s.coordinator;
    let mut pairs = vec![("coordinator_retries_total".to_string(), c.total_retries().to_string())];
    for (phase, l) in c.latencies() {
        pairs.push((format!("coordinator_requests_{phase}"), l.len().to_string()));
        let mean = if l.is_empty() { 0.0 } else { l.iter().sum::<f64>() / l.len() as f64 };
        pairs.push((format!("coordinator_latency_mean_ms_{phase}"), format!("{mean:.3}")));
    }
    crate::telemetry::render_flat_metrics(pairs.iter().map(|(k, v)| (k.as_str(), v.clone())))
}

pub fn serve_coordinator(
    listener: TcpListener,
    coordinator: Arc<Coordinator>,
    corpus: Arc<Corpus>,
) -> std::io::Result<ServerHandle> {
    spawn_router(listener, coordinator_router(coordinator, corpus))
}

async fn ask(State(s): State<Arc<CoordinatorState>>, Json(req): Json<AskRequest>) -> Response {
    if let Some(id) = &req.conversation_id {
        if conversation(&s.corpus, id).is_none() {
            return AgentError::UnknownConversation(id.clone()).into_response();
        }
    }
    match s.coordinator.ask(&req.question).await {
        Ok(r) => Json(r).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn load(State(s): State<Arc<CoordinatorState>>, Json(req): Json<LoadRequest>) -> Response {
    let Some(conv) = conversation(&s.corpus, &req.conversation_id) else {
        return AgentError::UnknownConversation(req.conversation_id).into_response();
    };
    match s.coordinator.load_conversation(conv).await {
        Ok(r) => Json(r).into_response(),
        Err(e) => e.into_response(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;
    use crate::memory::service::SearchHit;

    #[test]
    fn hits_format_like_memory_lines() {
        let hits = SearchResponse {
            results: vec![
                SearchHit {
                    id: "a".into(),
                    text: "Has a guinea pig named Oscar".into(),
                    date: NaiveDate::from_ymd_opt(2023, 8, 23).unwrap(),
                    score: 0.9,
                    speaker: String::new(),
                    source_dia_id: String::new(),
                },
                SearchHit {
                    id: "b".into(),
                    text: "Name is Melanie".into(),
                    date: NaiveDate::from_ymd_opt(2023, 5, 8).unwrap(),
                    score: 0.5,
                    speaker: String::new(),
                    source_dia_id: String::new(),
                },
            ],
        };
        assert_eq!(
            format_hits(&hits),
            "[2023-08-23] Has a guinea pig named Oscar\n[2023-05-08] Name is Melanie"
        );
        assert_eq!(format_hits(&SearchResponse { results: vec![] }), "");
    }

    #[test]
    fn error_bodies_name_the_stage() {
        let e = AgentError::Stage {
            stage: SEARCH_MEMORY.into(),
            message: "boom".into(),
        };
        let b = ErrorBody::from(&e);
        assert_eq!(b.stage.as_deref(), Some(SEARCH_MEMORY));
        assert!(b.error.contains("boom"));
    }
}
