use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{LatencyStats, MetricsRow, MetricsTable, Phase, TelemetryError, Tier};
use crate::evaluation::Classification;
use crate::llm::TokenUsage;

/// One scored answer; the row type of `answers_<backend>_<profile>.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerRow {
    pub index: usize,
    pub category: Option<i64>,
    pub question: String,
    pub expected_answer: String,
    pub answer: String,
    pub string_sim: f64,
    pub semantic_sim: f64,
    pub final_score: f64,
    pub classification: Classification,
}

#[derive(Debug, Serialize, Deserialize)]
struct FlatMetrics {
    experiment: String,
    phase: Phase,
    backend: String,
    tier: Tier,
    cpu_minutes: f64,
    ram_mb: f64,
    disk_mb: f64,
    network_mb: f64,
    duration_minutes: f64,
    prompt_tokens: u64,
    completion_tokens: u64,
    total_tokens: u64,
    latency_count: u64,
    latency_mean_ms: f64,
    latency_p50_ms: f64,
    latency_p95_ms: f64,
    latency_max_ms: f64,
}

impl From<&MetricsRow> for FlatMetrics {
    fn from(r: &MetricsRow) -> Self {
        Self {
            experiment: r.experiment.clone(),
            phase: r.phase,
            backend: r.backend.clone(),
            tier: r.tier,
            cpu_minutes: r.cpu_minutes,
            ram_mb: r.ram_mb,
            disk_mb: r.disk_mb,
            network_mb: r.network_mb,
            duration_minutes: r.duration_minutes,
            prompt_tokens: r.tokens.prompt_tokens,
            completion_tokens: r.tokens.completion_tokens,
            total_tokens: r.tokens.total_tokens,
            latency_count: r.latency.count,
            latency_mean_ms: r.latency.mean_ms,
            latency_p50_ms: r.latency.p50_ms,
            latency_p95_ms: r.latency.p95_ms,
            latency_max_ms: r.latency.max_ms,
        }
    }
}

impl From<FlatMetrics> for MetricsRow {
    fn from(f: FlatMetrics) -> Self {
        Self {
            experiment: f.experiment,
            phase: f.phase,
            backend: f.backend,
            tier: f.tier,
            cpu_minutes: f.cpu_minutes,
            ram_mb: f.ram_mb,
            disk_mb: f.disk_mb,
            network_mb: f.network_mb,
            duration_minutes: f.duration_minutes,
            tokens: TokenUsage {
                prompt_tokens: f.prompt_tokens,
                completion_tokens: f.completion_tokens,
                total_tokens: f.total_tokens,
            },
            latency: LatencyStats {
                count: f.latency_count,
                mean_ms: f.latency_mean_ms,
                p50_ms: f.latency_p50_ms,
                p95_ms: f.latency_p95_ms,
                max_ms: f.latency_max_ms,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvFiles {
    pub metrics: PathBuf,
    pub answers: PathBuf,
}

/// Writes `metrics_<backend>_<profile>.csv` and `answers_<backend>_<profile>.csv`
/// into `dir`. Output depends only on the inputs.
pub fn emit_csv(
    dir: &Path,
    backend: &str,
    profile: &str,
    table: &MetricsTable,
    answers: &[AnswerRow],
) -> Result<CsvFiles, TelemetryError> {
    std::fs::create_dir_all(dir)?;
    let files = CsvFiles {
        metrics: dir.join(format!("metrics_{backend}_{profile}.csv")),
        answers: dir.join(format!("answers_{backend}_{profile}.csv")),
    };
    let mut w = csv::Writer::from_path(&files.metrics)?;
    for r in &table.rows {
        w.serialize(FlatMetrics::from(r))?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(&files.answers)?;
    if answers.is_empty() {
        // Keep the header so an empty run still documents its schema.
        w.write_record([
            "index",
            "category",
            "question",
            "expected_answer",
            "answer",
            "string_sim",
            "semantic_sim",
            "final_score",
            "classification",
        ])?;
    }
    for a in answers {
        w.serialize(a)?;
    }
    w.flush()?;
    Ok(files)
}

pub fn read_metrics_csv(path: &Path) -> Result<MetricsTable, TelemetryError> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r
        .deserialize::<FlatMetrics>()
        .map(|row| row.map(MetricsRow::from))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(MetricsTable { rows })
}

pub fn read_answers_csv(path: &Path) -> Result<Vec<AnswerRow>, TelemetryError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<Vec<_>, _>>()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> MetricsTable {
        let mut rows = Vec::new();
        for phase in Phase::ALL {
            for tier in Tier::ALL {
                rows.push(MetricsRow {
                    experiment: "constrained".into(),
                    phase,
                    backend: "graph".into(),
                    tier,
                    cpu_minutes: 0.1 + 0.2,
                    ram_mb: 1115.3,
                    disk_mb: 1.0 / 3.0,
                    network_mb: 22.1,
                    duration_minutes: 173.95,
                    tokens: TokenUsage::new(1234, 56),
                    latency: LatencyStats::from_samples(&[201.5, 233.25, 1e-3]),
                });
            }
        }
        MetricsTable { rows }
    }

    fn answers() -> Vec<AnswerRow> {
        vec![AnswerRow {
            index: 0,
            category: Some(2),
            question: "What, \"exactly\", did she adopt?".into(),
            expected_answer: "a guinea pig".into(),
            answer: "I don't know based on the given memories.".into(),
            string_sim: 0.25,
            semantic_sim: 0.5,
            final_score: 0.375,
            classification: Classification::Idk,
        }]
    }

    #[test]
    fn round_trip_and_determinism() {
        let dir = tempfile::tempdir().unwrap();
        let files = emit_csv(dir.path(), "graph", "constrained", &table(), &answers()).unwrap();
        let back = read_metrics_csv(&files.metrics).unwrap();
        assert_eq!(back.rows.len(), 4);
        for (a, b) in table().rows.iter().zip(&back.rows) {
            assert!((a.cpu_minutes - b.cpu_minutes).abs() <= 1e-9);
            assert!((a.disk_mb - b.disk_mb).abs() <= 1e-9);
            assert!((a.latency.mean_ms - b.latency.mean_ms).abs() <= 1e-9);
            assert_eq!(a.tokens, b.tokens);
            assert_eq!((a.phase, a.tier), (b.phase, b.tier));
        }
        assert_eq!(read_answers_csv(&files.answers).unwrap(), answers());

        let first = std::fs::read(&files.metrics).unwrap();
        let first_answers = std::fs::read(&files.answers).unwrap();
        emit_csv(dir.path(), "graph", "constrained", &table(), &answers()).unwrap();
        assert_eq!(std::fs::read(&files.metrics).unwrap(), first);
        assert_eq!(std::fs::read(&files.answers).unwrap(), first_answers);
    }

    #[test]
    fn empty_answers_keep_header() {
        let dir = tempfile::tempdir().unwrap();
        let files = emit_csv(dir.path(), "vector", "unconstrained", &MetricsTable::default(), &[]).unwrap();
        let text = std::fs::read_to_string(&files.answers).unwrap();
        assert!(text.starts_with("index,category,question"));
        assert!(read_answers_csv(&files.answers).unwrap().is_empty());
    }
}
