//! Deterministic stand-in for a chat model.
//!
//! The mock understands three kinds of request:
//!
//! * fact extraction ([`FACT_EXTRACTION_PROMPT`]): runs the rule-based fact
//!   extractor on the carried turn;
//! * triple extraction ([`TRIPLE_EXTRACTION_PROMPT`]): runs the rule-based
//!   triple extractor;
//! * responder prompts: scores each memory line by content-word overlap with
//!   the question and answers with the best line's object phrase, or with the
//!   refusal sentence when no line overlaps on at least two points.
//!
//! A content word shared by question and memory line scores 1, or 2 when it
//! is capitalised in both (a named entity such as "Oscar").

use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use async_trait::async_trait;
use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use tokio::net::TcpListener;
use tokio::sync::watch;

use super::wire::{ChatCompletionRequest, ChatCompletionResponse};
use super::{estimate_tokens, ChatProvider, ChatRequest, ChatResponse, LlmError, TokenUsage};
use crate::agents::prompts::{parse_responder_prompt, IDK_SENTENCE};
use crate::memory::extract::{
    self, FACT_EXTRACTION_PROMPT, TRIPLE_EXTRACTION_PROMPT,
};
use crate::text;

/// Minimum overlap score for the mock to answer instead of refusing.
const MIN_OVERLAP: u32 = 2;

#[derive(Debug, Clone, Copy, Default)]
pub struct MockProvider {
    pub seed: u64,
}

impl MockProvider {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    /// Response text and usage for a request; pure.
    pub fn respond(&self, req: &ChatRequest) -> (String, TokenUsage) {
        let text = if req.system_prompt == FACT_EXTRACTION_PROMPT {
            match extract::parse_extraction_user_prompt(&req.user_prompt) {
                Some((speaker, message)) => none_if_empty(extract::extract_facts(speaker, message)),
                None => "NONE".to_string(),
            }
        } else if req.system_prompt == TRIPLE_EXTRACTION_PROMPT {
            match extract::parse_extraction_user_prompt(&req.user_prompt) {
                Some((speaker, message)) => none_if_empty(
                    extract::extract_triples(speaker, message)
                        .iter()
                        .map(extract::format_triple_line)
                        .collect(),
                ),
                None => "NONE".to_string(),
            }
        } else {
            answer_from_memories(&req.user_prompt)
        };
        let usage = TokenUsage::new(
            estimate_tokens(&req.system_prompt) + estimate_tokens(&req.user_prompt),
            estimate_tokens(&text),
        );
        (text, usage)
    }

    fn response_id(&self, req: &ChatRequest) -> String {
        use std::hash::Hasher;
        let mut h = fnv::FnvHasher::default();
        h.write_u64(self.seed);
        h.write(req.system_prompt.as_bytes());
        h.write(&[0]);
        h.write(req.user_prompt.as_bytes());
        format!("mock-{:016x}", h.finish())
    }

    /// Serves the mock as an OpenAI-compatible endpoint on `listener`.
    pub async fn serve(self, listener: TcpListener) -> std::io::Result<MockServerHandle> {
        let addr = listener.local_addr()?;
        let shared = Arc::new(MockServerState {
            provider: self,
            served: Mutex::new(TokenUsage::default()),
            requests: Mutex::new(0),
        });
        let app = Router::new()
            .route("/v1/chat/completions", post(completions))
            .route("/health", get(|| async { "ok" }))
            .with_state(shared.clone());
        let (stop_tx, mut stop_rx) = watch::channel(false);
        tokio::spawn(async move {
            let _ = axum::serve(listener, app)
                .with_graceful_shutdown(async move {
                    let _ = stop_rx.wait_for(|s| *s).await;
                })
                .await;
        });
        Ok(MockServerHandle {
            addr,
            state: shared,
            stop: stop_tx,
        })
    }
}

fn none_if_empty(lines: Vec<String>) -> String {
    if lines.is_empty() {
        "NONE".to_string()
    } else {
        lines.join("\n")
    }
}

/// Strips a leading `[YYYY-MM-DD] ` stamp.
fn strip_stamp(line: &str) -> &str {
    let l = line.trim();
    match l.strip_prefix('[').and_then(|r| r.split_once("] ")) {
        Some((_, rest)) => rest,
        None => l,
    }
}

fn answer_from_memories(user_prompt: &str) -> String {
    let Some((memories, question)) = parse_responder_prompt(user_prompt) else {
        return IDK_SENTENCE.to_string();
    };
    let q_words = text::words(&question);
    let mut best: Option<(u32, &str)> = None;
    for line in memories {
        let body = strip_stamp(line);
        let l_words = text::words(body);
        let mut seen = std::collections::BTreeSet::new();
        let mut score = 0;
        for qw in q_words.iter().filter(|w| w.is_content()) {
            if !seen.insert(qw.norm.as_str()) {
                continue;
            }
            if let Some(lw) = l_words.iter().find(|lw| lw.norm == qw.norm) {
                score += if qw.is_capitalized() && lw.is_capitalized() { 2 } else { 1 };
            }
        }
        if score >= MIN_OVERLAP && best.is_none_or(|(b, _)| score > b) {
            best = Some((score, body));
        }
    }
    match best {
        Some((_, line)) => extract::object_phrase(line),
        None => IDK_SENTENCE.to_string(),
    }
}

#[async_trait]
impl ChatProvider for MockProvider {
    async fn chat(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        req.validate()?;
        let started = Instant::now();
        let (text, usage) = self.respond(req);
        Ok(ChatResponse {
            text,
            usage,
            latency_ms: started.elapsed().as_secs_f64() * 1e3,
        })
    }
}

struct MockServerState {
    provider: MockProvider,
    served: Mutex<TokenUsage>,
    requests: Mutex<u64>,
}

async fn completions(
    State(state): State<Arc<MockServerState>>,
    Json(body): Json<ChatCompletionRequest>,
) -> Result<Json<ChatCompletionResponse>, (StatusCode, String)> {
    let req = body.to_chat();
    req.validate()
        .map_err(|e| (StatusCode::BAD_REQUEST, e.to_string()))?;
    let provider = MockProvider {
        seed: body.seed.unwrap_or(state.provider.seed),
    };
    let (text, usage) = provider.respond(&req);
    *state.served.lock().unwrap() += usage;
    *state.requests.lock().unwrap() += 1;
    Ok(Json(ChatCompletionResponse::single(
        provider.response_id(&req),
        req.model_name,
        text,
        usage,
    )))
}

/// Running mock endpoint. Keeps its own tally of the usage it reported.
pub struct MockServerHandle {
    addr: SocketAddr,
    state: Arc<MockServerState>,
    stop: watch::Sender<bool>,
}

impl MockServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Sum of the usage blocks in every response served so far.
    pub fn served_usage(&self) -> TokenUsage {
        *self.state.served.lock().unwrap()
    }

    pub fn requests(&self) -> u64 {
        *self.state.requests.lock().unwrap()
    }

    pub fn shutdown(&self) {
        let _ = self.stop.send(true);
    }
}

impl Drop for MockServerHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::prompts::{PromptTemplates, RESPONDER_SYSTEM};

    fn responder_request(memory: &str, question: &str) -> ChatRequest {
        ChatRequest::new(
            RESPONDER_SYSTEM,
            PromptTemplates::default().render_user(memory, question),
        )
    }

    #[test]
    fn answers_from_a_matching_memory() {
        let req = responder_request(
            "[2023-08-23] Has a guinea pig named Oscar",
            "Oscar Melanie's pet?",
        );
        let (text, _) = MockProvider::new(0).respond(&req);
        assert_eq!(text, "a guinea pig named Oscar");
        assert!(text.contains("guinea pig"));
    }

    #[test]
    fn refuses_without_memories() {
        let (text, _) = MockProvider::new(0).respond(&responder_request("", "Oscar Melanie's pet?"));
        assert_eq!(text, "I don't know based on the given memories.");
    }

    #[test]
    fn single_lowercase_overlap_is_not_enough() {
        let req = responder_request("[2023-05-08] Enjoys painting", "What does she like about painting?");
        assert_eq!(MockProvider::new(0).respond(&req).0, IDK_SENTENCE);
    }

    #[test]
    fn first_of_equally_scored_lines_wins() {
        let req = responder_request(
            "[2023-05-08] Melanie has a dog\n[2023-05-09] Melanie has a cat",
            "What animal does Melanie keep?",
        );
        assert_eq!(MockProvider::new(0).respond(&req).0, "a dog");
    }

    #[test]
    fn extraction_requests() {
        let p = MockProvider::new(3);
        let req = ChatRequest::new(
            FACT_EXTRACTION_PROMPT,
            extract::extraction_user_prompt("Melanie", "I have a guinea pig named Oscar."),
        );
        assert_eq!(p.respond(&req).0, "Melanie has a guinea pig named Oscar");
        let req = ChatRequest::new(
            TRIPLE_EXTRACTION_PROMPT,
            extract::extraction_user_prompt("Melanie", "Ok."),
        );
        assert_eq!(p.respond(&req).0, "NONE");
    }

    #[test]
    fn usage_follows_the_estimator() {
        let req = ChatRequest::new("sys prompt", "Hey Jon!");
        let (text, usage) = MockProvider::new(0).respond(&req);
        assert_eq!(usage.prompt_tokens, 2 + 3);
        assert_eq!(usage.completion_tokens, estimate_tokens(&text));
        assert_eq!(usage.total_tokens, usage.prompt_tokens + usage.completion_tokens);
    }

    #[tokio::test]
    async fn deterministic_across_calls() {
        let p = MockProvider::new(11);
        let req = responder_request("[2023-08-23] Has a guinea pig named Oscar", "Oscar Melanie's pet?");
        let a = p.chat(&req).await.unwrap();
        let b = p.chat(&req).await.unwrap();
        assert_eq!(a.text, b.text);
        assert_eq!(a.usage, b.usage);
        assert!(a.latency_ms >= 0.0);
    }
}
