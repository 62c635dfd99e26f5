use std::time::{Duration, Instant};

use async_trait::async_trait;

use crate::serve::http_client;

use super::wire::{ChatCompletionRequest, ChatCompletionResponse};
use super::{ChatProvider, ChatRequest, ChatResponse, LlmError, TokenUsage};

/// Header naming the calling component, read by the counting proxy.
pub const COMPONENT_HEADER: &str = "x-memharness-component";

/// Client for any endpoint accepting `POST /v1/chat/completions`.
#[derive(Debug, Clone)]
pub struct OpenAiCompatibleProvider {
    client: reqwest::Client,
    endpoint: String,
    api_key: Option<String>,
    component: Option<String>,
    seed: Option<u64>,
}

impl OpenAiCompatibleProvider {
    /// `base_url` may or may not already end in `/v1`.
    pub fn new(base_url: &str) -> Self {
        let base = base_url.trim_end_matches('/');
        let endpoint = if base.ends_with("/v1") {
            format!("{base}/chat/completions")
        } else {
            format!("{base}/v1/chat/completions")
        };
        Self {
            client: http_client(&endpoint, Some(Duration::from_secs(120))),
            endpoint,
            api_key: None,
            component: None,
            seed: None,
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.client = http_client(&self.endpoint, Some(timeout));
        self
    }

    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.api_key = key;
        self
    }

    /// Reads the key from [`super::API_KEY_ENV`] when set.
    pub fn with_api_key_from_env(self) -> Self {
        let key = std::env::var(super::API_KEY_ENV).ok().filter(|k| !k.is_empty());
        self.with_api_key(key)
    }

    pub fn with_component(mut self, component: impl Into<String>) -> Self {
        self.component = Some(component.into());
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }
}

#[async_trait]
impl ChatProvider for OpenAiCompatibleProvider {
    async fn chat(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        req.validate()?;
        let started = Instant::now();
        let mut call = self
            .client
            .post(&self.endpoint)
            .json(&ChatCompletionRequest::from_chat(req, self.seed));
        if let Some(key) = &self.api_key {
            call = call.bearer_auth(key);
        }
        if let Some(c) = &self.component {
            call = call.header(COMPONENT_HEADER, c);
        }
        let resp = call.send().await.map_err(transport)?;
        let status = resp.status();
        let body = resp.bytes().await.map_err(transport)?;
        if !status.is_success() {
            return Err(LlmError::ProviderHttp {
                status: status.as_u16(),
                body: String::from_utf8_lossy(&body).into_owned(),
            });
        }
        let parsed: ChatCompletionResponse = serde_json::from_slice(&body)
            .map_err(|e| LlmError::BadResponse(e.to_string()))?;
        let text = parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| LlmError::BadResponse("no choices".into()))?;
        Ok(ChatResponse {
            text,
            usage: parsed.usage.map(TokenUsage::from).unwrap_or_default(),
            latency_ms: started.elapsed().as_secs_f64() * 1e3,
        })
    }
}

fn transport(e: reqwest::Error) -> LlmError {
    if e.is_timeout() {
        LlmError::ProviderTimeout
    } else {
        LlmError::Transport(e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_normalisation() {
        assert_eq!(
            OpenAiCompatibleProvider::new("http://h:1").endpoint(),
            "http://h:1/v1/chat/completions"
        );
        assert_eq!(
            OpenAiCompatibleProvider::new("http://h:1/v1/").endpoint(),
            "http://h:1/v1/chat/completions"
        );
    }
}
