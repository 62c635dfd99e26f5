use std::sync::RwLock;

use async_trait::async_trait;

use super::embed::{embed, unit_similarity};
use super::{
    rank, BackendKind, BackendStats, Extractor, MemoryBackend, MemoryError, MemoryRecord,
    RememberOutcome, RememberRequest, SearchResult, StatCounters,
};

/// In-memory fact store ranked by embedding similarity. Duplicate facts are
/// stored again, not merged.
#[derive(Debug)]
pub struct VectorBackend {
    extractor: Extractor,
    records: RwLock<Vec<MemoryRecord>>,
    counters: StatCounters,
}

impl VectorBackend {
    pub fn new(extractor: Extractor) -> Self {
        Self {
            extractor,
            records: RwLock::new(Vec::new()),
            counters: StatCounters::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[async_trait]
impl MemoryBackend for VectorBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Vector
    }

    async fn remember(&self, req: &RememberRequest) -> Result<RememberOutcome, MemoryError> {
        self.counters.remembered();
        let Some(facts) = self
            .counters
            .with_retry(|| self.extractor.facts(&req.speaker, &req.text))
            .await
        else {
            return Ok(RememberOutcome {
                ids: vec![],
                skipped: true,
            });
        };
        // Embed before taking the lock so a search never sees half a turn.
        let mut staged = Vec::with_capacity(facts.len());
        for fact in facts {
            match embed(&fact) {
                Ok(e) => staged.push((fact, e)),
                Err(MemoryError::EmptyText) => continue,
                Err(e) => return Err(e),
            }
        }
        let mut store = self.records.write().unwrap();
        let ids = staged
            .into_iter()
            .map(|(text, embedding)| {
                let id = format!("vec-{}", store.len() + 1);
                store.push(MemoryRecord {
                    id: id.clone(),
                    text,
                    date: req.session_date,
                    speaker: req.speaker.clone(),
                    source_dia_id: req.dia_id.clone(),
                    embedding: Some(embedding),
                });
                id
            })
            .collect();
        Ok(RememberOutcome { ids, skipped: false })
    }

    async fn search(&self, query: &str, k: usize) -> Result<Vec<SearchResult>, MemoryError> {
        if k == 0 {
            return Err(MemoryError::InvalidK);
        }
        self.counters.searched();
        let q = embed(query)?;
        let store = self.records.read().unwrap();
        let scored = store
            .iter()
            .map(|r| SearchResult {
                score: unit_similarity(&q, r.embedding.as_deref().unwrap_or(&[])),
                record: r.clone(),
            })
            .collect();
        Ok(rank(scored, k))
    }

    async fn stats(&self) -> Result<BackendStats, MemoryError> {
        Ok(self.counters.snapshot(self.len() as u64))
    }

    async fn snapshot(&self) -> Result<serde_json::Value, MemoryError> {
        let store = self.records.read().unwrap();
        Ok(serde_json::json!({ "kind": "vector", "records": *store }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn turn(speaker: &str, text: &str, dia: &str) -> RememberRequest {
        RememberRequest {
            speaker: speaker.into(),
            text: text.into(),
            dia_id: dia.into(),
            session_date: NaiveDate::from_ymd_opt(2023, 1, 20).unwrap(),
        }
    }

    #[tokio::test]
    async fn records_are_dated_and_embedded() {
        let b = VectorBackend::new(Extractor::Deterministic);
        let out = b
            .remember(&turn("Melanie", "I have a guinea pig named Oscar. I adopted him last week.", "D1:2"))
            .await
            .unwrap();
        assert_eq!(out.ids, ["vec-1", "vec-2"]);
        let hits = b.search("Melanie has a guinea pig named Oscar", 5).await.unwrap();
        assert_eq!(hits[0].record.id, "vec-1");
        assert!((hits[0].score - 1.0).abs() < 1e-12);
        assert!(hits.iter().all(|h| h.record.date == NaiveDate::from_ymd_opt(2023, 1, 20).unwrap()));
    }

    #[tokio::test]
    async fn empty_extraction_leaves_store_alone() {
        let b = VectorBackend::new(Extractor::Deterministic);
        let out = b.remember(&turn("Melanie", "Ok.", "D2:3")).await.unwrap();
        assert!(out.ids.is_empty() && !out.skipped);
        assert!(b.is_empty());
    }

    #[tokio::test]
    async fn duplicates_are_kept() {
        let b = VectorBackend::new(Extractor::Deterministic);
        let t = turn("Melanie", "My name is Melanie and I love hiking.", "D1:1");
        b.remember(&t).await.unwrap();
        b.remember(&t).await.unwrap();
        assert_eq!(b.len(), 2);
    }

    #[tokio::test]
    async fn k_truncates() {
        let b = VectorBackend::new(Extractor::Deterministic);
        for i in 0..10 {
            b.remember(&turn("Jon", &format!("Jon opened studio number {i} downtown."), "D1:1"))
                .await
                .unwrap();
        }
        assert_eq!(b.len(), 10);
        assert_eq!(b.search("studio", 1).await.unwrap().len(), 1);
        assert_eq!(b.search("studio", 0).await, Err(MemoryError::InvalidK));
    }
}
