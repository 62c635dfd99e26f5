use std::future::Future;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::routing::get;
use axum::{Json, Router};
use tokio::io::{AsyncRead, AsyncReadExt, AsyncWrite, AsyncWriteExt};
use tokio::net::tcp::OwnedWriteHalf;
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{mpsc, oneshot, watch};
use tokio::time::Instant;

use super::{
    precise_sleep_until, LatencySampler, NetProxyError, NetworkProfile, ProxyStats, TokenBucket,
    ToxicConfig, CHUNK_BYTES, DEFAULT_BURST_BYTES,
};
use crate::serve::{spawn_router, ServerHandle};

/// Chunks that may sit in one direction's delay line.
const DELAY_LINE_CHUNKS: usize = 1024;
/// Cap on retained delay samples.
const MAX_DELAY_SAMPLES: usize = 1 << 20;

#[derive(Debug, Default)]
struct Counters {
    bytes_up: AtomicU64,
    bytes_down: AtomicU64,
    connections: AtomicU64,
    delays: Mutex<Vec<u64>>,
}

impl Counters {
    fn snapshot(&self) -> ProxyStats {
        ProxyStats {
            bytes_up: self.bytes_up.load(Ordering::Relaxed),
            bytes_down: self.bytes_down.load(Ordering::Relaxed),
            connections: self.connections.load(Ordering::Relaxed),
            added_delay_samples_ms: self.delays.lock().unwrap().clone(),
        }
    }

    fn record_delay(&self, d: Duration) {
        let mut v = self.delays.lock().unwrap();
        if v.len() < MAX_DELAY_SAMPLES {
            v.push((d.as_secs_f64() * 1e3).round() as u64);
        }
    }
}

/// A running proxy. Dropping the handle or calling
/// [`shutdown`](Self::shutdown) stops accepting and closes open connections.
#[derive(Debug)]
pub struct ProxyHandle {
    addr: SocketAddr,
    profile: NetworkProfile,
    counters: Arc<Counters>,
    stop: watch::Sender<bool>,
}

impl ProxyHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn profile(&self) -> NetworkProfile {
        self.profile
    }

    pub fn stats(&self) -> ProxyStats {
        self.counters.snapshot()
    }

    /// Bytes forwarded in both directions so far.
    pub fn total_bytes(&self) -> u64 {
        self.counters.bytes_up.load(Ordering::Relaxed)
            + self.counters.bytes_down.load(Ordering::Relaxed)
    }

    /// Serves `GET /stats` (JSON) and `GET /metrics` (flat text) on `listener`.
    pub fn serve_admin(&self, listener: TcpListener) -> std::io::Result<ServerHandle> {
        let router = Router::new()
            .route(
                "/stats",
                get(|State(c): State<Arc<Counters>>| async move { Json(c.snapshot()) }),
            )
            .route(
                "/metrics",
                get(|State(c): State<Arc<Counters>>| async move {
                    let s = c.snapshot();
                    format!(
                        "proxy_bytes_up {}\nproxy_bytes_down {}\nproxy_connections {}\nproxy_delay_samples {}\n",
                        s.bytes_up,
                        s.bytes_down,
                        s.connections,
                        s.added_delay_samples_ms.len()
                    )
                }),
            )
            .with_state(self.counters.clone());
        spawn_router(listener, router)
    }

    pub fn shutdown(&self) {
        let _ = self.stop.send(true);
    }
}

impl Drop for ProxyHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Binds `listen` and forwards every accepted connection to `target` with
/// the profile's toxics. `seed` fixes the jitter draws.
pub async fn start_proxy(
    listen: &str,
    target: &str,
    profile: NetworkProfile,
    seed: u64,
) -> Result<ProxyHandle, NetProxyError> {
    let listener = TcpListener::bind(listen)
        .await
        .map_err(|source| NetProxyError::Bind {
            addr: listen.to_string(),
            source,
        })?;
    start_proxy_on(listener, target, profile, seed).await
}

pub async fn start_proxy_on(
    listener: TcpListener,
    target: &str,
    profile: NetworkProfile,
    seed: u64,
) -> Result<ProxyHandle, NetProxyError> {
    profile.toxic.validate()?;
    let target_addr = tokio::net::lookup_host(target)
        .await
        .ok()
        .and_then(|mut a| a.next())
        .ok_or_else(|| NetProxyError::Resolve(target.to_string()))?;
    let addr = listener.local_addr().map_err(|source| NetProxyError::Bind {
        addr: target.to_string(),
        source,
    })?;
    let counters = Arc::new(Counters::default());
    let (stop, stop_rx) = watch::channel(false);
    tokio::spawn(accept_loop(
        listener,
        target_addr,
        profile.toxic,
        seed,
        counters.clone(),
        stop_rx,
    ));
    Ok(ProxyHandle {
        addr,
        profile,
        counters,
        stop,
    })
}

async fn accept_loop(
    listener: TcpListener,
    target: SocketAddr,
    toxic: ToxicConfig,
    seed: u64,
    counters: Arc<Counters>,
    mut stop: watch::Receiver<bool>,
) {
    let mut index = 0u64;
    loop {
        let accepted = tokio::select! {
            a = listener.accept() => a,
            _ = stop.wait_for(|s| *s) => return,
        };
        let Ok((client, _)) = accepted else { continue };
        counters.connections.fetch_add(1, Ordering::Relaxed);
        let conn_seed = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        index += 1;
        let counters = counters.clone();
        let mut stop = stop.clone();
        tokio::spawn(async move {
            tokio::select! {
                _ = connection(client, target, toxic, conn_seed, counters) => {}
                _ = stop.wait_for(|s| *s) => {}
            }
        });
    }
}

#[allow(deprecated)]
fn reset(half: OwnedWriteHalf) {
    // Linger zero turns the close into an RST, so the client sees a reset
    // rather than an orderly end of stream. `forget` skips the FIN a
    // dropped write half would send; the socket closes with the read half.
    let _ = half.as_ref().set_linger(Some(Duration::ZERO));
    half.forget();
}

async fn connection(
    client: TcpStream,
    target: SocketAddr,
    toxic: ToxicConfig,
    seed: u64,
    counters: Arc<Counters>,
) {
    let _ = client.set_nodelay(true);
    let (cr, cw) = client.into_split();
    let up_toxic = if toxic.direction.covers_upstream() { toxic } else { ToxicConfig::NONE };
    let down_toxic = if toxic.direction.covers_downstream() { toxic } else { ToxicConfig::NONE };

    // Client bytes are read and stamped while the upstream connection is
    // still being set up, so setup time does not add to the injected delay.
    let (writer_tx, writer_rx) = oneshot::channel::<OwnedWriteHalf>();
    let up = pump(cr, async move { writer_rx.await.ok() }, up_toxic, seed, &counters, &counters.bytes_up);
    tokio::pin!(up);
    let connect = async move {
        let s = TcpStream::connect(target).await?;
        let _ = s.set_nodelay(true);
        let (ur, uw) = s.into_split();
        let _ = writer_tx.send(uw);
        Ok::<_, std::io::Error>(ur)
    };
    let ur = tokio::select! {
        // A failed connect also ends `up`; the failure must win so the
        // client gets its reset.
        biased;
        r = connect => r,
        _ = &mut up => return,
    };
    let ur = match ur {
        Ok(ur) => ur,
        Err(e) => {
            tracing::warn!("target {target} unreachable: {e}");
            reset(cw);
            return;
        }
    };
    let down = pump(
        ur,
        std::future::ready(Some(cw)),
        down_toxic,
        seed.wrapping_add(1),
        &counters,
        &counters.bytes_down,
    );
    tokio::join!(up, down);
}

/// `writer` resolves once the far side is connected, or to `None` if it
/// never will be.
async fn pump<R, W, F>(
    mut reader: R,
    writer: F,
    toxic: ToxicConfig,
    seed: u64,
    counters: &Counters,
    forwarded: &AtomicU64,
) where
    R: AsyncRead + Unpin,
    W: AsyncWrite + Unpin,
    F: Future<Output = Option<W>>,
{
    if toxic.is_passthrough() {
        let Some(mut writer) = writer.await else { return };
        let mut buf = vec![0u8; CHUNK_BYTES];
        loop {
            let n = match reader.read(&mut buf).await {
                Ok(0) | Err(_) => break,
                Ok(n) => n,
            };
            if writer.write_all(&buf[..n]).await.is_err() {
                return;
            }
            forwarded.fetch_add(n as u64, Ordering::Relaxed);
        }
        let _ = writer.shutdown().await;
        return;
    }

    let (tx, mut rx) = mpsc::channel::<(Vec<u8>, Instant, Instant)>(DELAY_LINE_CHUNKS);
    let delayed = toxic.latency_ms > 0;

    let read_side = async move {
        let mut bucket = toxic
            .bandwidth_bytes_per_s
            .map(|rate| TokenBucket::new(rate, DEFAULT_BURST_BYTES, std::time::Instant::now()));
        let mut sampler = LatencySampler::new(toxic.latency_ms, toxic.jitter_ms, seed);
        let mut buf = vec![0u8; CHUNK_BYTES];
        loop {
            let n = match reader.read(&mut buf).await {
                Ok(0) | Err(_) => break,
                Ok(n) => n,
            };
            if let Some(b) = bucket.as_mut() {
                let ready = b.reserve(n, std::time::Instant::now());
                precise_sleep_until(Instant::from_std(ready)).await;
            }
            let stamp = Instant::now();
            let deadline = stamp + sampler.sample();
            if tx.send((buf[..n].to_vec(), stamp, deadline)).await.is_err() {
                break;
            }
        }
    };

    let write_side = async move {
        let Some(mut writer) = writer.await else { return };
        while let Some((chunk, stamp, deadline)) = rx.recv().await {
            if delayed {
                precise_sleep_until(deadline).await;
                counters.record_delay(stamp.elapsed());
            }
            if writer.write_all(&chunk).await.is_err() {
                return;
            }
            forwarded.fetch_add(chunk.len() as u64, Ordering::Relaxed);
        }
        let _ = writer.shutdown().await;
    };

    tokio::join!(read_side, write_side);
}
