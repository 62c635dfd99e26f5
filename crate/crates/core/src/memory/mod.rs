//! The memory agent: record types, the backend trait, and the reference
//! vector and graph stores.

pub mod embed;
pub mod external;
pub mod extract;
pub mod graph;
pub mod service;
pub mod vector;

use std::fmt;
use std::future::Future;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use async_trait::async_trait;
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::llm::{ChatProvider, ChatRequest};
use extract::RawTriple;

pub use embed::{embed, EMBEDDING_DIM};
pub use external::ExternalBackend;
pub use graph::GraphBackend;
pub use service::{serve_memory, MemoryServiceHandle};
pub use vector::VectorBackend;

/// Results returned when a search request does not name `k`.
pub const DEFAULT_K: usize = 20;

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum MemoryError {
    #[error("memory backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("extraction failed: {0}")]
    Extraction(String),
    #[error("text is empty")]
    EmptyText,
    #[error("k must be at least 1")]
    InvalidK,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryRecord {
    pub id: String,
    pub text: String,
    pub date: NaiveDate,
    pub speaker: String,
    pub source_dia_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub record: MemoryRecord,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triple {
    pub subject: String,
    pub predicate: String,
    pub object: String,
    pub date: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "url")]
pub enum BackendKind {
    Vector,
    Graph,
    External(String),
}

impl BackendKind {
    /// Short label used in file names and table keys.
    pub fn label(&self) -> &'static str {
        match self {
            BackendKind::Vector => "vector",
            BackendKind::Graph => "graph",
            BackendKind::External(_) => "external",
        }
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for BackendKind {
    type Err = String;

    /// Accepts `vector`, `graph`, or `external=<url>`.
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "vector" => Ok(Self::Vector),
            "graph" => Ok(Self::Graph),
            other => match other.strip_prefix("external=") {
                Some(url) if url.starts_with("http://") || url.starts_with("https://") => {
                    Ok(Self::External(url.to_string()))
                }
                Some(url) => Err(format!("external backend url must be http(s): {url:?}")),
                None if other == "external" => {
                    Err("external backend needs a url: external=<url>".into())
                }
                None => Err(format!("unknown backend {other:?}")),
            },
        }
    }
}

/// Body of `POST /remember`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RememberRequest {
    pub speaker: String,
    pub text: String,
    pub dia_id: String,
    pub session_date: NaiveDate,
}

/// Reply of `POST /remember`. `skipped` is set when extraction failed twice.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RememberOutcome {
    pub ids: Vec<String>,
    #[serde(default)]
    pub skipped: bool,
}

/// Counters kept by every backend.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendStats {
    pub records: u64,
    pub remember_calls: u64,
    pub search_calls: u64,
    pub extraction_retries: u64,
    pub skipped_turns: u64,
}

#[derive(Debug, Default)]
pub(crate) struct StatCounters {
    remember_calls: AtomicU64,
    search_calls: AtomicU64,
    extraction_retries: AtomicU64,
    skipped_turns: AtomicU64,
}

impl StatCounters {
    pub(crate) fn remembered(&self) {
        self.remember_calls.fetch_add(1, Ordering::Relaxed);
    }
    pub(crate) fn searched(&self) {
        self.search_calls.fetch_add(1, Ordering::Relaxed);
    }
    pub(crate) fn snapshot(&self, records: u64) -> BackendStats {
        BackendStats {
            records,
            remember_calls: self.remember_calls.load(Ordering::Relaxed),
            search_calls: self.search_calls.load(Ordering::Relaxed),
            extraction_retries: self.extraction_retries.load(Ordering::Relaxed),
            skipped_turns: self.skipped_turns.load(Ordering::Relaxed),
        }
    }

    /// Runs `attempt` and retries it once on failure. `None` means the turn
    /// is to be skipped.
    pub(crate) async fn with_retry<T, F, Fut>(&self, mut attempt: F) -> Option<T>
    where
        F: FnMut() -> Fut,
        Fut: Future<Output = Result<T, MemoryError>>,
    {
        match attempt().await {
            Ok(v) => return Some(v),
            Err(e) => tracing::warn!("extraction failed, retrying: {e}"),
        }
        self.extraction_retries.fetch_add(1, Ordering::Relaxed);
        match attempt().await {
            Ok(v) => Some(v),
            Err(e) => {
                tracing::warn!("extraction failed twice, skipping turn: {e}");
                self.skipped_turns.fetch_add(1, Ordering::Relaxed);
                None
            }
        }
    }
}

#[async_trait]
pub trait MemoryBackend: Send + Sync {
    fn kind(&self) -> BackendKind;

    /// Extracts and stores memories from one turn; ids in insertion order.
    async fn remember(&self, req: &RememberRequest) -> Result<RememberOutcome, MemoryError>;

    /// At most `k` results ordered by non-increasing score.
    async fn search(&self, query: &str, k: usize) -> Result<Vec<SearchResult>, MemoryError>;

    async fn stats(&self) -> Result<BackendStats, MemoryError>;

    /// Store contents as JSON, for snapshot files.
    async fn snapshot(&self) -> Result<serde_json::Value, MemoryError>;
}

/// Where extracted facts and triples come from.
#[derive(Clone)]
pub enum Extractor {
    /// Rule-based extraction in-process, no model involved.
    Deterministic,
    /// Ask a chat provider with the extraction prompts.
    Provider(Arc<dyn ChatProvider>),
}

impl fmt::Debug for Extractor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Extractor::Deterministic => f.write_str("Deterministic"),
            Extractor::Provider(_) => f.write_str("Provider"),
        }
    }
}

impl Extractor {
    pub async fn facts(&self, speaker: &str, text: &str) -> Result<Vec<String>, MemoryError> {
        match self {
            Extractor::Deterministic => Ok(extract::extract_facts(speaker, text)),
            Extractor::Provider(p) => {
                let reply = ask(p, extract::FACT_EXTRACTION_PROMPT, speaker, text).await?;
                Ok(extract::parse_fact_lines(&reply))
            }
        }
    }

    pub async fn triples(&self, speaker: &str, text: &str) -> Result<Vec<RawTriple>, MemoryError> {
        match self {
            Extractor::Deterministic => Ok(extract::extract_triples(speaker, text)),
            Extractor::Provider(p) => {
                let reply = ask(p, extract::TRIPLE_EXTRACTION_PROMPT, speaker, text).await?;
                extract::parse_fact_lines(&reply)
                    .iter()
                    .map(|l| {
                        extract::parse_triple_line(l)
                            .ok_or_else(|| MemoryError::Extraction(format!("bad triple line {l:?}")))
                    })
                    .collect()
            }
        }
    }
}

async fn ask(
    provider: &Arc<dyn ChatProvider>,
    system: &str,
    speaker: &str,
    text: &str,
) -> Result<String, MemoryError> {
    let req = ChatRequest::new(system, extract::extraction_user_prompt(speaker, text));
    provider
        .chat(&req)
        .await
        .map(|r| r.text)
        .map_err(|e| MemoryError::Extraction(e.to_string()))
}

/// One `[YYYY-MM-DD] <text>` line per result, in result order.
pub fn format_memories(results: &[SearchResult]) -> String {
    results
        .iter()
        .map(|r| format!("[{}] {}", r.record.date.format("%Y-%m-%d"), r.record.text))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Sorts by non-increasing score, keeping insertion order among ties, and
/// truncates to `k`.
pub(crate) fn rank(mut scored: Vec<SearchResult>, k: usize) -> Vec<SearchResult> {
    scored.sort_by(|a, b| b.score.total_cmp(&a.score));
    scored.truncate(k);
    scored
}
