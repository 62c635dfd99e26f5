use std::time::Duration;

use async_trait::async_trait;
use serde::de::DeserializeOwned;
use serde::Serialize;

use super::service::{SearchRequest, SearchResponse};
use super::{
    BackendKind, BackendStats, MemoryBackend, MemoryError, MemoryRecord, RememberOutcome,
    RememberRequest, SearchResult,
};

/// Forwards `/remember` and `/search` to another memory service speaking the
/// same JSON protocol.
#[derive(Debug, Clone)]
pub struct ExternalBackend {
    base: String,
    client: reqwest::Client,
}

impl ExternalBackend {
    pub fn new(base_url: &str) -> Self {
        Self {
            base: base_url.trim_end_matches('/').to_string(),
            client: crate::serve::http_client(base_url, Some(Duration::from_secs(300))),
        }
    }

    pub async fn health(&self) -> Result<(), MemoryError> {
        let r = self
            .client
            .get(format!("{}/health", self.base))
            .send()
            .await
            .map_err(unavailable)?;
        if r.status().is_success() {
            Ok(())
        } else {
            Err(MemoryError::BackendUnavailable(format!("health returned {}", r.status())))
        }
    }

    async fn post<B: Serialize, R: DeserializeOwned>(&self, path: &str, body: &B) -> Result<R, MemoryError> {
        let r = self
            .client
            .post(format!("{}{path}", self.base))
            .json(body)
            .send()
            .await
            .map_err(unavailable)?;
        decode(r).await
    }

    async fn get<R: DeserializeOwned>(&self, path: &str) -> Result<R, MemoryError> {
        let r = self
            .client
            .get(format!("{}{path}", self.base))
            .send()
            .await
            .map_err(unavailable)?;
        decode(r).await
    }
}

fn unavailable(e: reqwest::Error) -> MemoryError {
    MemoryError::BackendUnavailable(e.to_string())
}

async fn decode<R: DeserializeOwned>(r: reqwest::Response) -> Result<R, MemoryError> {
    let status = r.status();
    if status.is_success() {
        return r.json().await.map_err(unavailable);
    }
    let body = r.text().await.unwrap_or_default();
    Err(match status.as_u16() {
        400 if body.contains("empty") => MemoryError::EmptyText,
        400 => MemoryError::InvalidK,
        502 => MemoryError::Extraction(body),
        _ => MemoryError::BackendUnavailable(format!("{status}: {body}")),
    })
}

#[async_trait]
impl MemoryBackend for ExternalBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::External(self.base.clone())
    }

    async fn remember(&self, req: &RememberRequest) -> Result<RememberOutcome, MemoryError> {
        self.post("/remember", req).await
    }

    async fn search(&self, query: &str, k: usize) -> Result<Vec<SearchResult>, MemoryError> {
        if k == 0 {
            return Err(MemoryError::InvalidK);
        }
        let resp: SearchResponse = self
            .post(
                "/search",
                &SearchRequest {
                    query: query.to_string(),
                    k: Some(k),
                },
            )
            .await?;
        let mut out: Vec<SearchResult> = resp
            .results
            .into_iter()
            .enumerate()
            .map(|(i, h)| SearchResult {
                score: h.score.clamp(0.0, 1.0),
                record: MemoryRecord {
                    id: if h.id.is_empty() { format!("ext-{}", i + 1) } else { h.id },
                    text: h.text,
                    date: h.date,
                    speaker: h.speaker,
                    source_dia_id: h.source_dia_id,
                    embedding: None,
                },
            })
            .collect();
        out.truncate(k);
        Ok(out)
    }

    async fn stats(&self) -> Result<BackendStats, MemoryError> {
        self.get("/stats").await
    }

    async fn snapshot(&self) -> Result<serde_json::Value, MemoryError> {
        self.get("/snapshot").await
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::{serve_memory, Extractor, VectorBackend};
    use chrono::NaiveDate;
    use std::sync::Arc;

    #[tokio::test]
    async fn forwards_to_a_memory_service() {
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let inner = Arc::new(VectorBackend::new(Extractor::Deterministic));
        let server = serve_memory(listener, inner.clone()).unwrap();
        let ext = ExternalBackend::new(&server.base_url());
        ext.health().await.unwrap();
        let out = ext
            .remember(&RememberRequest {
                speaker: "Caroline".into(),
                text: "I started painting sunsets in the park.".into(),
                dia_id: "D1:3".into(),
                session_date: NaiveDate::from_ymd_opt(2023, 5, 8).unwrap(),
            })
            .await
            .unwrap();
        assert_eq!(out.ids, ["vec-1"]);
        let hits = ext.search("painting sunsets", 3).await.unwrap();
        assert_eq!(hits[0].record.text, "Caroline started painting sunsets in the park");
        assert_eq!(hits, inner.search("painting sunsets", 3).await.unwrap().into_iter().map(|mut r| {
            r.record.embedding = None;
            r
        }).collect::<Vec<_>>());
        assert_eq!(ext.stats().await.unwrap().records, 1);
    }

    #[tokio::test]
    async fn dead_service_is_unavailable() {
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        drop(listener);
        let ext = ExternalBackend::new(&format!("http://{addr}"));
        assert!(matches!(
            ext.search("x", 1).await,
            Err(MemoryError::BackendUnavailable(_))
        ));
    }
}
