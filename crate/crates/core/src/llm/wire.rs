//! OpenAI-compatible chat completion payloads (non-streaming subset).

use serde::{Deserialize, Serialize};

use super::{ChatRequest, TokenUsage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMessage {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatCompletionRequest {
    pub model: String,
    pub messages: Vec<WireMessage>,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ChatCompletionRequest {
    pub fn from_chat(req: &ChatRequest, seed: Option<u64>) -> Self {
        Self {
            model: req.model_name.clone(),
            messages: vec![
                WireMessage {
                    role: "system".into(),
                    content: req.system_prompt.clone(),
                },
                WireMessage {
                    role: "user".into(),
                    content: req.user_prompt.clone(),
                },
            ],
            temperature: req.temperature,
            seed,
        }
    }

    /// Joins all system messages and all user messages back into a request.
    pub fn to_chat(&self) -> ChatRequest {
        let join = |role: &str| {
            self.messages
                .iter()
                .filter(|m| m.role == role)
                .map(|m| m.content.as_str())
                .collect::<Vec<_>>()
                .join("\n")
        };
        ChatRequest {
            system_prompt: join("system"),
            user_prompt: join("user"),
            model_name: self.model.clone(),
            temperature: self.temperature,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub total_tokens: u64,
}

impl From<TokenUsage> for WireUsage {
    fn from(u: TokenUsage) -> Self {
        Self {
            prompt_tokens: u.prompt_tokens,
            completion_tokens: u.completion_tokens,
            total_tokens: u.total_tokens,
        }
    }
}

impl From<WireUsage> for TokenUsage {
    fn from(u: WireUsage) -> Self {
        Self {
            prompt_tokens: u.prompt_tokens,
            completion_tokens: u.completion_tokens,
            total_tokens: u.total_tokens,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireChoice {
    pub index: u32,
    pub message: WireMessage,
    #[serde(default)]
    pub finish_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatCompletionResponse {
    pub id: String,
    pub object: String,
    pub created: u64,
    pub model: String,
    pub choices: Vec<WireChoice>,
    #[serde(default)]
    pub usage: Option<WireUsage>,
}

impl ChatCompletionResponse {
    pub fn single(id: String, model: String, text: String, usage: TokenUsage) -> Self {
        Self {
            id,
            object: "chat.completion".into(),
            created: 0,
            model,
            choices: vec![WireChoice {
                index: 0,
                message: WireMessage {
                    role: "assistant".into(),
                    content: text,
                },
                finish_reason: Some("stop".into()),
            }],
            usage: Some(usage.into()),
        }
    }
}

/// Pulls the `usage` object out of a response body without requiring the
/// rest of the payload to match our schema.
pub(crate) fn usage_from_body(body: &[u8]) -> Option<TokenUsage> {
    let v: serde_json::Value = serde_json::from_slice(body).ok()?;
    let u = v.get("usage")?;
    let field = |k: &str| u.get(k).and_then(serde_json::Value::as_u64);
    let prompt = field("prompt_tokens")?;
    let completion = field("completion_tokens").unwrap_or(0);
    let total = field("total_tokens").unwrap_or(prompt + completion);
    Some(TokenUsage {
        prompt_tokens: prompt,
        completion_tokens: completion,
        total_tokens: total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_extraction() {
        let body = br#"{"choices": [], "usage": {"prompt_tokens": 10, "completion_tokens": 5, "total_tokens": 15}}"#;
        assert_eq!(usage_from_body(body), Some(TokenUsage::new(10, 5)));
        assert_eq!(usage_from_body(b"not json"), None);
        assert_eq!(usage_from_body(br#"{"choices": []}"#), None);
    }

    #[test]
    fn chat_roundtrip_through_wire() {
        let req = ChatRequest::new("sys", "user");
        let wire = ChatCompletionRequest::from_chat(&req, Some(7));
        assert_eq!(wire.to_chat(), req);
    }
}
