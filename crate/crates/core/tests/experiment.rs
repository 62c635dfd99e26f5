use memharness_core::experiment::{run_experiment, ExperimentConfig, ExtractorKind};
use memharness_core::memory::BackendKind;
use memharness_core::netproxy::ProfileName;

fn config(backend: BackendKind, dir: &std::path::Path) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(backend, ProfileName::Unconstrained, 11, dir);
    c.sample_interval_ms = 100;
    c
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn vector_run_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_experiment(&config(BackendKind::Vector, dir.path())).await.unwrap();
    assert_eq!(out.dir, dir.path().join("vector_unconstrained_seed11"));
    for f in [
        "manifest.json",
        "metrics_vector_unconstrained.csv",
        "answers_vector_unconstrained.csv",
        "verdict.json",
        "costs.json",
        "costs.svg",
        "report.md",
    ] {
        assert!(out.dir.join(f).is_file(), "missing {f}");
        assert!(out.manifest.artifacts.iter().any(|a| a == f), "{f} not in manifest");
    }
    assert_eq!(out.manifest.status, "complete");
    assert_eq!(out.answers.len(), 5);
    assert_eq!(out.verdict.accuracy.n, 5);
    let t = &out.verdict.tokens;
    assert!(t.conserved, "{t:?}");
    assert!(t.proxy_total.total_tokens > 0);
    assert_eq!(t.served_total, Some(t.proxy_total));
    // Extraction happens during loading, answering during Q&A.
    assert!(t.proxy_by_phase["loading"].total_tokens > 0);
    assert!(t.proxy_by_phase["qa"].total_tokens > 0);
    assert_eq!(out.verdict.load.turns_sent, 6);
    assert!(out.verdict.load.records_created > 0);
    assert_eq!(out.metrics.rows.len(), 4);
    assert!(out.costs.total_usd > 0.0);

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "complete");
    assert!(manifest["endpoints"]["coordinator"].as_str().unwrap().starts_with("http://"));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn graph_run_with_rule_based_extraction() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config(BackendKind::Graph, dir.path());
    c.extractor = ExtractorKind::Deterministic;
    let out = run_experiment(&c).await.unwrap();
    // No model calls during loading when extraction is rule-based.
    assert_eq!(out.verdict.tokens.proxy_by_phase["loading"].total_tokens, 0);
    assert!(out.verdict.tokens.conserved);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn unreachable_external_backend_fails_at_startup() {
    let dir = tempfile::tempdir().unwrap();
    let c = config(BackendKind::External("http://127.0.0.1:9".into()), dir.path());
    let err = run_experiment(&c).await.unwrap_err();
    assert_eq!(err.stage(), "startup");
    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("external_unconstrained_seed11/manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["status"], "failed");
    assert_eq!(manifest["error"]["stage"], "startup");
}

#[test]
fn invalid_config_is_rejected_before_anything_starts() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config(BackendKind::Vector, dir.path());
    c.k = 0;
    assert_eq!(c.validate().unwrap_err().stage(), "config");
}
