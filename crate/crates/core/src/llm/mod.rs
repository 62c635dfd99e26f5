//! Chat-completion providers and token accounting.
//!
//! [`MockProvider`] answers deterministically and is the default for every
//! run. [`OpenAiCompatibleProvider`] speaks the OpenAI chat wire format to a
//! configured base URL. [`CountingProxy`] sits between callers and a
//! provider endpoint and tallies reported usage per phase and component.

mod counting;
mod mock;
mod openai;
mod recording;
mod wire;

use std::sync::Arc;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

pub use counting::{CountingProxy, CountingProxyHandle, UsageKey, UsageLedger};
pub use mock::{MockProvider, MockServerHandle};
pub use openai::{OpenAiCompatibleProvider, COMPONENT_HEADER};
pub use recording::RecordingProvider;
pub use wire::{ChatCompletionRequest, ChatCompletionResponse, WireMessage, WireUsage};

pub const DEFAULT_MODEL: &str = "gpt-4o-mini";
/// Environment variable holding the API key for remote providers.
pub const API_KEY_ENV: &str = "MEMHARNESS_API_KEY";

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("provider timed out")]
    ProviderTimeout,
    #[error("provider returned HTTP {status}: {body}")]
    ProviderHttp { status: u16, body: String },
    #[error("provider transport error: {0}")]
    Transport(String),
    #[error("unexpected provider response: {0}")]
    BadResponse(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system_prompt: String,
    pub user_prompt: String,
    pub model_name: String,
    pub temperature: f64,
}

impl ChatRequest {
    pub fn new(system_prompt: impl Into<String>, user_prompt: impl Into<String>) -> Self {
        Self {
            system_prompt: system_prompt.into(),
            user_prompt: user_prompt.into(),
            model_name: DEFAULT_MODEL.to_string(),
            temperature: 0.0,
        }
    }

    pub fn with_model(mut self, model: impl Into<String>) -> Self {
        self.model_name = model.into();
        self
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.system_prompt.trim().is_empty() || self.user_prompt.trim().is_empty() {
            return Err(LlmError::InvalidRequest("prompts must be non-empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub total_tokens: u64,
}

impl TokenUsage {
    pub fn new(prompt_tokens: u64, completion_tokens: u64) -> Self {
        Self {
            prompt_tokens,
            completion_tokens,
            total_tokens: prompt_tokens + completion_tokens,
        }
    }
}

impl std::ops::Add for TokenUsage {
    type Output = TokenUsage;

    fn add(self, rhs: TokenUsage) -> TokenUsage {
        TokenUsage {
            prompt_tokens: self.prompt_tokens + rhs.prompt_tokens,
            completion_tokens: self.completion_tokens + rhs.completion_tokens,
            total_tokens: self.total_tokens + rhs.total_tokens,
        }
    }
}

impl std::ops::AddAssign for TokenUsage {
    fn add_assign(&mut self, rhs: TokenUsage) {
        *self = *self + rhs;
    }
}

impl std::iter::Sum for TokenUsage {
    fn sum<I: Iterator<Item = TokenUsage>>(iter: I) -> TokenUsage {
        iter.fold(TokenUsage::default(), |a, b| a + b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub usage: TokenUsage,
    pub latency_ms: f64,
}

#[async_trait]
pub trait ChatProvider: Send + Sync {
    async fn chat(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError>;
}

#[async_trait]
impl<P: ChatProvider + ?Sized> ChatProvider for Arc<P> {
    async fn chat(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        (**self).chat(req).await
    }
}

/// Word-and-punctuation token estimate used by the mock provider.
///
/// Every whitespace-delimited token counts once for its alphanumeric body
/// and once per leading or trailing punctuation mark, so `"Hey Jon!"` is 3.
pub fn estimate_tokens(text: &str) -> u64 {
    text.split_whitespace()
        .map(|tok| {
            let lead = tok.chars().take_while(|c| c.is_ascii_punctuation()).count();
            if lead == tok.chars().count() {
                return lead as u64;
            }
            let trail = tok
                .chars()
                .rev()
                .take_while(|c| c.is_ascii_punctuation())
                .count();
            (lead + trail + 1) as u64
        })
        .sum()
}
