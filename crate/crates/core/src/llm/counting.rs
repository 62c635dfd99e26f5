//! Usage-counting HTTP forward proxy for chat endpoints.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{HeaderMap, HeaderName, Method, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::Router;
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tokio::sync::watch;

use super::openai::COMPONENT_HEADER;
use super::wire::usage_from_body;
use super::TokenUsage;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct UsageKey {
    pub phase: String,
    pub component: String,
}

/// Everything the proxy has tallied so far.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UsageLedger {
    pub usage: BTreeMap<UsageKey, TokenUsage>,
    pub requests: u64,
    /// Successful completions whose body carried no readable usage block.
    pub unparsed: u64,
    /// Request body bytes per calling component.
    pub bytes_in: BTreeMap<String, u64>,
    /// Response body bytes per calling component.
    pub bytes_out: BTreeMap<String, u64>,
    /// Round-trip time of each forwarded request, per phase.
    pub latencies_ms: BTreeMap<String, Vec<f64>>,
}

impl UsageLedger {
    pub fn total(&self) -> TokenUsage {
        self.usage.values().copied().sum()
    }

    pub fn for_phase(&self, phase: &str) -> TokenUsage {
        self.usage
            .iter()
            .filter(|(k, _)| k.phase == phase)
            .map(|(_, u)| *u)
            .sum()
    }

    pub fn for_component(&self, phase: &str, component: &str) -> TokenUsage {
        self.usage
            .get(&UsageKey {
                phase: phase.into(),
                component: component.into(),
            })
            .copied()
            .unwrap_or_default()
    }

    /// Request plus response body bytes attributed to `component`.
    pub fn component_bytes(&self, component: &str) -> u64 {
        self.bytes_in.get(component).copied().unwrap_or(0)
            + self.bytes_out.get(component).copied().unwrap_or(0)
    }

    pub fn total_bytes(&self) -> u64 {
        self.bytes_in.values().sum::<u64>() + self.bytes_out.values().sum::<u64>()
    }

    pub fn latencies(&self, phase: &str) -> &[f64] {
        self.latencies_ms.get(phase).map_or(&[], Vec::as_slice)
    }

    pub fn record(&mut self, phase: &str, component: &str, usage: TokenUsage) {
        *self
            .usage
            .entry(UsageKey {
                phase: phase.into(),
                component: component.into(),
            })
            .or_default() += usage;
    }
}

struct ProxyState {
    target: String,
    client: reqwest::Client,
    phase: RwLock<String>,
    ledger: Mutex<UsageLedger>,
}

pub struct CountingProxy;

impl CountingProxy {
    /// Forwards every request on `listener` to `target` (a base URL such as
    /// `http://127.0.0.1:8080`), tallying usage from chat completions.
    pub async fn start(listener: TcpListener, target: &str) -> std::io::Result<CountingProxyHandle> {
        let addr = listener.local_addr()?;
        let state = Arc::new(ProxyState {
            target: target.trim_end_matches('/').to_string(),
            client: crate::serve::http_client(target, None),
            phase: RwLock::new("idle".into()),
            ledger: Mutex::new(UsageLedger::default()),
        });
        let app = Router::new().fallback(forward).with_state(state.clone());
        let (stop_tx, mut stop_rx) = watch::channel(false);
        tokio::spawn(async move {
            let _ = axum::serve(listener, app)
                .with_graceful_shutdown(async move {
                    let _ = stop_rx.wait_for(|s| *s).await;
                })
                .await;
        });
        Ok(CountingProxyHandle {
            addr,
            state,
            stop: stop_tx,
        })
    }
}

const HOP_BY_HOP: &[&str] = &[
    "connection",
    "content-length",
    "host",
    "keep-alive",
    "proxy-connection",
    "te",
    "trailer",
    "transfer-encoding",
    "upgrade",
];

fn copy_headers(src: &HeaderMap) -> HeaderMap {
    src.iter()
        .filter(|(k, _)| !HOP_BY_HOP.contains(&k.as_str()))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect()
}

async fn forward(
    State(state): State<Arc<ProxyState>>,
    method: Method,
    uri: Uri,
    headers: HeaderMap,
    body: Bytes,
) -> Response {
    let path = uri.path_and_query().map_or("/", |p| p.as_str());
    let url = format!("{}{}", state.target, path);
    let component = headers
        .get(COMPONENT_HEADER)
        .and_then(|v| v.to_str().ok())
        .unwrap_or("unknown")
        .to_string();
    let is_completion = method == Method::POST && uri.path().ends_with("/chat/completions");
    let request_len = body.len() as u64;
    let started = std::time::Instant::now();

    let upstream = state
        .client
        .request(method, &url)
        .headers(copy_headers(&headers))
        .body(body)
        .send()
        .await;
    let upstream = match upstream {
        Ok(r) => r,
        Err(e) => return (StatusCode::BAD_GATEWAY, e.to_string()).into_response(),
    };
    let status = upstream.status();
    let resp_headers = copy_headers(upstream.headers());
    let resp_body = match upstream.bytes().await {
        Ok(b) => b,
        Err(e) => return (StatusCode::BAD_GATEWAY, e.to_string()).into_response(),
    };

    {
        let phase = state.phase.read().unwrap().clone();
        let mut ledger = state.ledger.lock().unwrap();
        ledger.requests += 1;
        *ledger.bytes_in.entry(component.clone()).or_default() += request_len;
        *ledger.bytes_out.entry(component.clone()).or_default() += resp_body.len() as u64;
        ledger
            .latencies_ms
            .entry(phase.clone())
            .or_default()
            .push(started.elapsed().as_secs_f64() * 1000.0);
        if is_completion && status.is_success() {
            match usage_from_body(&resp_body) {
                Some(u) => ledger.record(&phase, &component, u),
                None => ledger.unparsed += 1,
            }
        }
    }

    let mut out = (status, resp_body).into_response();
    for (k, v) in resp_headers.iter() {
        out.headers_mut()
            .insert(HeaderName::from(k), v.clone());
    }
    out
}

pub struct CountingProxyHandle {
    addr: SocketAddr,
    state: Arc<ProxyState>,
    stop: watch::Sender<bool>,
}

impl CountingProxyHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Subsequent usage is booked under `phase`.
    pub fn set_phase(&self, phase: &str) {
        *self.state.phase.write().unwrap() = phase.to_string();
    }

    pub fn ledger(&self) -> UsageLedger {
        self.state.ledger.lock().unwrap().clone()
    }

    pub fn shutdown(&self) {
        let _ = self.stop.send(true);
    }
}

impl Drop for CountingProxyHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ledger_sums() {
        let mut l = UsageLedger::default();
        assert_eq!(l.total(), TokenUsage::default());
        l.record("loading", "memory", TokenUsage::new(10, 5));
        l.record("qa", "responder", TokenUsage::new(20, 7));
        l.record("qa", "responder", TokenUsage::new(1, 1));
        assert_eq!(l.total().total_tokens, 44);
        assert_eq!(l.for_phase("qa").total_tokens, 29);
        assert_eq!(l.for_component("qa", "responder"), TokenUsage::new(21, 8));
        assert_eq!(l.for_component("qa", "memory"), TokenUsage::default());
    }
}
