//! The responder: answers a question from a block of retrieved memories.

use std::sync::Arc;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;

use super::prompts::PromptTemplates;
use crate::llm::{ChatProvider, ChatRequest, ChatResponse, LlmError, TokenUsage, DEFAULT_MODEL};
use crate::serve::{spawn_router, ServerHandle};

/// Renders the responder prompts and returns the provider's reply as is.
pub async fn responder_answer(
    templates: &PromptTemplates,
    provider: &dyn ChatProvider,
    model: &str,
    memory_block: &str,
    question: &str,
) -> Result<ChatResponse, LlmError> {
    let req = ChatRequest::new(
        templates.responder_system.clone(),
        templates.render_user(memory_block, question),
    )
    .with_model(model);
    provider.chat(&req).await
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerRequest {
    pub memory: String,
    pub question: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerResponse {
    pub answer: String,
    pub usage: TokenUsage,
    pub latency_ms: f64,
}

struct ResponderState {
    templates: PromptTemplates,
    provider: Arc<dyn ChatProvider>,
    model: String,
}

/// `POST /answer` and `GET /health`.
pub fn responder_router(
    templates: PromptTemplates,
    provider: Arc<dyn ChatProvider>,
    model: Option<String>,
) -> Router {
    let state = Arc::new(ResponderState {
        templates,
        provider,
        model: model.unwrap_or_else(|| DEFAULT_MODEL.to_string()),
    });
    Router::new()
        .route("/answer", post(answer))
        .route("/health", get(|| async { "ok" }))
        .with_state(state)
}

pub fn serve_responder(
    listener: TcpListener,
    templates: PromptTemplates,
    provider: Arc<dyn ChatProvider>,
) -> std::io::Result<ServerHandle> {
    spawn_router(listener, responder_router(templates, provider, None))
}

async fn answer(
    State(s): State<Arc<ResponderState>>,
    Json(req): Json<AnswerRequest>,
) -> Response {
    if req.question.trim().is_empty() {
        return (StatusCode::BAD_REQUEST, "question must be non-empty").into_response();
    }
    match responder_answer(&s.templates, s.provider.as_ref(), &s.model, &req.memory, &req.question).await {
        Ok(r) => Json(AnswerResponse {
            answer: r.text,
            usage: r.usage,
            latency_ms: r.latency_ms,
        })
        .into_response(),
        Err(LlmError::ProviderTimeout) => {
            (StatusCode::GATEWAY_TIMEOUT, "provider timed out").into_response()
        }
        Err(e) => (StatusCode::BAD_GATEWAY, e.to_string()).into_response(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::prompts::IDK_SENTENCE;
    use crate::llm::MockProvider;

    #[tokio::test]
    async fn empty_memory_is_a_refusal() {
        let r = responder_answer(
            &PromptTemplates::default(),
            &MockProvider::new(7),
            DEFAULT_MODEL,
            "",
            "What is Melanie's pet?",
        )
        .await
        .unwrap();
        assert_eq!(r.text, IDK_SENTENCE);
    }

    #[tokio::test]
    async fn answers_from_memories() {
        let r = responder_answer(
            &PromptTemplates::default(),
            &MockProvider::new(7),
            DEFAULT_MODEL,
            "[2023-08-23] Has a guinea pig named Oscar",
            "Oscar Melanie's pet?",
        )
        .await
        .unwrap();
        assert!(r.text.contains("guinea pig"), "{}", r.text);
    }
}
