use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use memharness_core::agents::{
    serve_responder, AgentError, Coordinator, CoordinatorConfig, PromptTemplates, IDK_SENTENCE,
};
use memharness_core::dataset::mini_fixture;
use memharness_core::llm::MockProvider;
use memharness_core::memory::{serve_memory, Extractor, RememberOutcome, VectorBackend};
use memharness_core::serve::{spawn_router, ServerHandle};
use tokio::net::TcpListener;

async fn listener() -> TcpListener {
    TcpListener::bind("127.0.0.1:0").await.unwrap()
}

async fn responder() -> ServerHandle {
    serve_responder(listener().await, PromptTemplates::default(), Arc::new(MockProvider::new(3))).unwrap()
}

async fn vector_memory() -> ServerHandle {
    serve_memory(listener().await, Arc::new(VectorBackend::new(Extractor::Deterministic))).unwrap()
}

/// Accepts the first `ok` remember calls, then fails every call.
async fn failing_memory(ok: u64) -> (ServerHandle, Arc<AtomicU64>) {
    let calls = Arc::new(AtomicU64::new(0));
    let c = calls.clone();
    let router = Router::new().route(
        "/remember",
        post(move || {
            let c = c.clone();
            async move {
                if c.fetch_add(1, Ordering::SeqCst) < ok {
                    Ok(Json(RememberOutcome { ids: vec!["m".into()], skipped: false }))
                } else {
                    Err(StatusCode::SERVICE_UNAVAILABLE)
                }
            }
        }),
    );
    (spawn_router(listener().await, router).unwrap(), calls)
}

#[tokio::test]
async fn tools_run_in_order_and_answers_come_from_memory() {
    let (mem, resp) = (vector_memory().await, responder().await);
    let co = Coordinator::new(CoordinatorConfig::new(mem.base_url(), resp.base_url()));
    let corpus = mini_fixture();
    let report = co.load_conversation(&corpus.entries[0].conversation).await.unwrap();
    assert_eq!(report.turns_sent, 6);
    assert_eq!(report.failed, 0);

    let r = co.ask("What pet does Melanie have?").await.unwrap();
    assert_eq!(r.tool_trace, ["search_memory", "answer_question"]);
    assert!(r.retrieved_memories.contains("guinea pig"), "{}", r.retrieved_memories);
    assert!(r.answer.contains("guinea pig"), "{}", r.answer);
    assert_eq!(r.retries, 0);
    assert!(r.timings.total_ms >= r.timings.search_memory_ms + r.timings.answer_question_ms - 1e-6);
}

#[tokio::test]
async fn empty_memory_gives_the_refusal() {
    let (mem, resp) = (vector_memory().await, responder().await);
    let co = Coordinator::new(CoordinatorConfig::new(mem.base_url(), resp.base_url()));
    let r = co.ask("What pet does Melanie have?").await.unwrap();
    assert_eq!(r.answer, IDK_SENTENCE);
    assert!(r.retrieved_memories.is_empty());
}

#[tokio::test]
async fn memory_outage_after_two_turns_aborts_loading() {
    let (mem, calls) = failing_memory(2).await;
    let resp = responder().await;
    let co = Coordinator::new(CoordinatorConfig::new(mem.base_url(), resp.base_url()));
    let corpus = mini_fixture();
    match co.load_conversation(&corpus.entries[0].conversation).await {
        Err(AgentError::LoadAborted { report, .. }) => {
            assert_eq!(report.turns_sent, 2);
            assert_eq!(report.failed, 3);
            // Each failed turn was tried twice.
            assert_eq!(report.retries, 3);
            assert_eq!(calls.load(Ordering::SeqCst), 2 + 3 * 2);
        }
        other => panic!("expected an aborted load, got {other:?}"),
    }
}

#[tokio::test]
async fn dead_memory_fails_the_search_stage() {
    let resp = responder().await;
    let dead = {
        let l = listener().await;
        let url = format!("http://{}", l.local_addr().unwrap());
        drop(l);
        url
    };
    let co = Coordinator::new(CoordinatorConfig::new(dead, resp.base_url()));
    match co.ask("anything?").await {
        Err(AgentError::Stage { stage, .. }) => assert_eq!(stage, "search_memory"),
        other => panic!("{other:?}"),
    }
    assert_eq!(co.total_retries(), 1);
}

#[test]
fn responder_prompt_matches_the_golden_file() {
    let golden = include_str!("../../../fixtures/golden/responder_user_q0.txt");
    let memory = "[2023-05-08] Melanie has a guinea pig named Oscar\n[2023-05-08] Melanie adopted him last week";
    let rendered = PromptTemplates::default().render_user(memory, "What pet does Melanie have?");
    assert_eq!(rendered, golden);
}

#[tokio::test]
async fn coordinator_serves_flat_metrics() {
    let (mem, resp) = (vector_memory().await, responder().await);
    let co = Arc::new(Coordinator::new(CoordinatorConfig::new(mem.base_url(), resp.base_url())));
    let corpus = Arc::new(mini_fixture());
    let h = memharness_core::agents::coordinator::serve_coordinator(listener().await, co, corpus).unwrap();
    let client = reqwest::Client::builder().no_proxy().build().unwrap();
    let r = client
        .post(format!("{}/ask", h.base_url()))
        .json(&serde_json::json!({ "question": "What pet does Melanie have?" }))
        .send()
        .await
        .unwrap();
    assert!(r.status().is_success());
    let text = client.get(format!("{}/metrics", h.base_url())).send().await.unwrap().text().await.unwrap();
    let kv: std::collections::BTreeMap<&str, &str> =
        text.lines().map(|l| l.split_once(' ').unwrap()).collect();
    assert_eq!(kv["coordinator_retries_total"], "0");
    // One search and one answer call.
    assert_eq!(kv["coordinator_requests_idle"], "2");
}
