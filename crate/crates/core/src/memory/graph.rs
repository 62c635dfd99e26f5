//! Knowledge-graph triple store.
//!
//! Entities are nodes keyed by their lowercased, whitespace-collapsed name;
//! each stored triple is an edge carrying a [`MemoryRecord`].
//!
//! Retrieval activates entities by content-word overlap with the query,
//! `a0(e) = |words(e) ∩ words(q)| / |words(e)|`, then spreads activation over
//! edges for a configurable number of hops, each hop keeping
//! `max(a(e), DECAY * max over neighbours a(n))`. A triple scores the mean of
//! its two endpoint activations; zero-scored triples are not returned.

use std::collections::{BTreeSet, HashMap};
use std::sync::RwLock;

use async_trait::async_trait;
use serde::Serialize;

use super::extract::RawTriple;
use super::{
    rank, BackendKind, BackendStats, Extractor, MemoryBackend, MemoryError, MemoryRecord,
    RememberOutcome, RememberRequest, SearchResult, StatCounters, Triple,
};
use crate::text;

/// Share of a neighbour's activation passed across one edge.
pub const DECAY: f64 = 0.5;

#[derive(Debug, Clone, Serialize)]
struct Entity {
    name: String,
    #[serde(skip)]
    tokens: BTreeSet<String>,
}

#[derive(Debug, Clone, Serialize)]
struct Edge {
    subject: usize,
    predicate: String,
    object: usize,
    record: MemoryRecord,
}

#[derive(Debug, Default)]
struct Graph {
    entities: Vec<Entity>,
    by_key: HashMap<String, usize>,
    neighbours: Vec<BTreeSet<usize>>,
    edges: Vec<Edge>,
    edge_keys: HashMap<(usize, String, usize), usize>,
}

fn entity_key(name: &str) -> String {
    text::collapse_lower(&name.replace('_', " "))
}

impl Graph {
    fn entity(&mut self, name: &str) -> usize {
        let key = entity_key(name);
        if let Some(&i) = self.by_key.get(&key) {
            return i;
        }
        let i = self.entities.len();
        self.entities.push(Entity {
            name: name.to_string(),
            tokens: text::content_words(name),
        });
        self.neighbours.push(BTreeSet::new());
        self.by_key.insert(key, i);
        i
    }

    fn activations(&self, query: &BTreeSet<String>, hops: usize) -> Vec<f64> {
        let mut a: Vec<f64> = self
            .entities
            .iter()
            .map(|e| {
                if e.tokens.is_empty() {
                    0.0
                } else {
                    e.tokens.intersection(query).count() as f64 / e.tokens.len() as f64
                }
            })
            .collect();
        for _ in 0..hops {
            a = (0..a.len())
                .map(|i| {
                    let spread = self.neighbours[i]
                        .iter()
                        .map(|&n| a[n])
                        .fold(0.0, f64::max);
                    a[i].max(DECAY * spread)
                })
                .collect();
        }
        a
    }
}

#[derive(Debug)]
pub struct GraphBackend {
    extractor: Extractor,
    hops: usize,
    graph: RwLock<Graph>,
    counters: StatCounters,
}

impl GraphBackend {
    pub fn new(extractor: Extractor) -> Self {
        Self {
            extractor,
            hops: 1,
            graph: RwLock::new(Graph::default()),
            counters: StatCounters::default(),
        }
    }

    /// Neighbourhood expansion depth; defaults to one hop.
    pub fn with_hops(mut self, hops: usize) -> Self {
        self.hops = hops;
        self
    }

    pub fn entity_count(&self) -> usize {
        self.graph.read().unwrap().entities.len()
    }

    pub fn triple_count(&self) -> usize {
        self.graph.read().unwrap().edges.len()
    }

    pub fn triples(&self) -> Vec<Triple> {
        let g = self.graph.read().unwrap();
        g.edges
            .iter()
            .map(|e| Triple {
                subject: g.entities[e.subject].name.clone(),
                predicate: e.predicate.clone(),
                object: g.entities[e.object].name.clone(),
                date: e.record.date,
            })
            .collect()
    }

    /// Inserts triples directly, bypassing extraction. Returns edge ids.
    pub fn insert(&self, triples: &[RawTriple], req: &RememberRequest) -> Vec<String> {
        let mut guard = self.graph.write().unwrap();
        let g = &mut *guard;
        let mut ids = Vec::with_capacity(triples.len());
        for t in triples {
            let (s, p, o) = (t.subject.trim(), t.predicate.trim(), t.object.trim());
            if s.is_empty() || p.is_empty() || o.is_empty() {
                continue;
            }
            let si = g.entity(s);
            let oi = g.entity(o);
            let key = (si, p.to_lowercase(), oi);
            if let Some(&existing) = g.edge_keys.get(&key) {
                ids.push(g.edges[existing].record.id.clone());
                continue;
            }
            let id = format!("kg-{}", g.edges.len() + 1);
            let text = format!("{s} {p} {o}").replace('_', " ");
            let next = g.edges.len();
            g.edge_keys.insert(key, next);
            g.edges.push(Edge {
                subject: si,
                predicate: p.to_string(),
                object: oi,
                record: MemoryRecord {
                    id: id.clone(),
                    text,
                    date: req.session_date,
                    speaker: req.speaker.clone(),
                    source_dia_id: req.dia_id.clone(),
                    embedding: None,
                },
            });
            g.neighbours[si].insert(oi);
            g.neighbours[oi].insert(si);
            ids.push(id);
        }
        ids
    }
}

#[async_trait]
impl MemoryBackend for GraphBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Graph
    }

    async fn remember(&self, req: &RememberRequest) -> Result<RememberOutcome, MemoryError> {
        self.counters.remembered();
        match self
            .counters
            .with_retry(|| self.extractor.triples(&req.speaker, &req.text))
            .await
        {
            Some(triples) => Ok(RememberOutcome {
                ids: self.insert(&triples, req),
                skipped: false,
            }),
            None => Ok(RememberOutcome {
                ids: vec![],
                skipped: true,
            }),
        }
    }

    async fn search(&self, query: &str, k: usize) -> Result<Vec<SearchResult>, MemoryError> {
        if k == 0 {
            return Err(MemoryError::InvalidK);
        }
        self.counters.searched();
        let q = text::content_words(query);
        let g = self.graph.read().unwrap();
        let a = g.activations(&q, self.hops);
        let scored = g
            .edges
            .iter()
            .filter_map(|e| {
                let score = (a[e.subject] + a[e.object]) / 2.0;
                (score > 0.0).then(|| SearchResult {
                    record: e.record.clone(),
                    score,
                })
            })
            .collect();
        Ok(rank(scored, k))
    }

    async fn stats(&self) -> Result<BackendStats, MemoryError> {
        Ok(self.counters.snapshot(self.triple_count() as u64))
    }

    async fn snapshot(&self) -> Result<serde_json::Value, MemoryError> {
        let g = self.graph.read().unwrap();
        Ok(serde_json::json!({
            "kind": "graph",
            "entities": g.entities,
            "edges": g.edges,
        }))
    }
}
