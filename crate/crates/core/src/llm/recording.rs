use std::sync::Mutex;

use async_trait::async_trait;

use super::{ChatProvider, ChatRequest, ChatResponse, LlmError, TokenUsage};

/// Wraps a provider and sums the usage reported by every response it
/// returns, independently of any proxy on the wire.
pub struct RecordingProvider<P> {
    inner: P,
    seen: Mutex<(TokenUsage, u64)>,
}

impl<P: ChatProvider> RecordingProvider<P> {
    pub fn new(inner: P) -> Self {
        Self {
            inner,
            seen: Mutex::new((TokenUsage::default(), 0)),
        }
    }

    /// Summed usage over successful responses.
    pub fn usage(&self) -> TokenUsage {
        self.seen.lock().unwrap().0
    }

    pub fn responses(&self) -> u64 {
        self.seen.lock().unwrap().1
    }
}

#[async_trait]
impl<P: ChatProvider> ChatProvider for RecordingProvider<P> {
    async fn chat(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let resp = self.inner.chat(req).await?;
        let mut seen = self.seen.lock().unwrap();
        seen.0 += resp.usage;
        seen.1 += 1;
        Ok(resp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::MockProvider;

    #[tokio::test]
    async fn sums_usage() {
        let p = RecordingProvider::new(MockProvider::new(1));
        let req = ChatRequest::new("You are a helpful assistant.", "MEMORIES:\n\nQUESTION:\nWho?");
        let a = p.chat(&req).await.unwrap();
        let b = p.chat(&req).await.unwrap();
        assert_eq!(p.usage(), a.usage + b.usage);
        assert_eq!(p.responses(), 2);
    }
}
