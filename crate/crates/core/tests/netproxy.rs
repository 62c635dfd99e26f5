use std::net::SocketAddr;
use std::time::{Duration, Instant};

use memharness_core::netproxy::{
    start_proxy, Direction, NetProxyError, NetworkProfile, ProfileName, ToxicConfig,
};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};

/// Accepts one connection, reads it to EOF, and returns the bytes and the
/// instant EOF arrived.
async fn sink() -> (SocketAddr, tokio::task::JoinHandle<(Vec<u8>, Instant)>) {
    let l = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = l.local_addr().unwrap();
    let h = tokio::spawn(async move {
        let (mut s, _) = l.accept().await.unwrap();
        let mut buf = Vec::new();
        s.read_to_end(&mut buf).await.unwrap();
        (buf, Instant::now())
    });
    (addr, h)
}

fn payload(n: usize) -> Vec<u8> {
    (0..n).map(|i| (i * 31 % 251) as u8).collect()
}

fn profile(latency_ms: u64, jitter_ms: u64, bw: Option<u64>) -> NetworkProfile {
    NetworkProfile {
        name: ProfileName::Constrained,
        toxic: ToxicConfig {
            latency_ms,
            jitter_ms,
            bandwidth_bytes_per_s: bw,
            direction: Direction::Both,
        },
    }
}

#[tokio::test]
async fn passthrough_preserves_bytes() {
    let (target, done) = sink().await;
    let proxy = start_proxy("127.0.0.1:0", &target.to_string(), NetworkProfile::unconstrained(), 1)
        .await
        .unwrap();
    let data = payload(1 << 20);
    let mut c = TcpStream::connect(proxy.addr()).await.unwrap();
    c.write_all(&data).await.unwrap();
    c.shutdown().await.unwrap();
    let (got, _) = done.await.unwrap();
    assert_eq!(got, data);
    let stats = proxy.stats();
    assert_eq!(stats.bytes_up, data.len() as u64);
    assert_eq!(stats.bytes_down, 0);
    assert_eq!(stats.connections, 1);
    assert!(stats.added_delay_samples_ms.is_empty());
}

#[tokio::test]
async fn fixed_latency_applies_to_each_direction() {
    // Echo server behind a 40 ms proxy: a round trip takes at least 80 ms.
    let l = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let target = l.local_addr().unwrap();
    tokio::spawn(async move {
        let (mut s, _) = l.accept().await.unwrap();
        let mut b = [0u8; 4];
        s.read_exact(&mut b).await.unwrap();
        s.write_all(&b).await.unwrap();
    });
    let proxy = start_proxy("127.0.0.1:0", &target.to_string(), profile(40, 0, None), 1)
        .await
        .unwrap();
    let mut c = TcpStream::connect(proxy.addr()).await.unwrap();
    let t0 = Instant::now();
    c.write_all(b"ping").await.unwrap();
    let mut b = [0u8; 4];
    c.read_exact(&mut b).await.unwrap();
    let rtt = t0.elapsed();
    assert_eq!(&b, b"ping");
    assert!(rtt >= Duration::from_millis(80), "{rtt:?}");
    let samples = proxy.stats().added_delay_samples_ms;
    assert_eq!(samples.len(), 2);
    assert!(samples.iter().all(|d| (40..=42).contains(d)), "{samples:?}");
}

#[tokio::test]
async fn jittered_delays_stay_in_bounds() {
    let l = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let target = l.local_addr().unwrap();
    tokio::spawn(async move {
        let (mut s, _) = l.accept().await.unwrap();
        let mut buf = [0u8; 64];
        while let Ok(n) = s.read(&mut buf).await {
            if n == 0 {
                break;
            }
        }
    });
    let proxy = start_proxy("127.0.0.1:0", &target.to_string(), profile(60, 20, None), 5)
        .await
        .unwrap();
    let mut c = TcpStream::connect(proxy.addr()).await.unwrap();
    c.set_nodelay(true).unwrap();
    for _ in 0..20 {
        c.write_all(b"x").await.unwrap();
        tokio::time::sleep(Duration::from_millis(5)).await;
    }
    c.shutdown().await.unwrap();
    tokio::time::sleep(Duration::from_millis(150)).await;
    let samples = proxy.stats().added_delay_samples_ms;
    assert!(!samples.is_empty());
    assert!(samples.iter().all(|d| (40..=80).contains(d)), "{samples:?}");
}

#[tokio::test]
async fn bandwidth_cap_paces_a_bulk_transfer() {
    let (target, done) = sink().await;
    let proxy = start_proxy(
        "127.0.0.1:0",
        &target.to_string(),
        profile(0, 0, Some(1_000_000)),
        1,
    )
    .await
    .unwrap();
    let data = payload(1_000_000);
    let t0 = Instant::now();
    let mut c = TcpStream::connect(proxy.addr()).await.unwrap();
    c.write_all(&data).await.unwrap();
    c.shutdown().await.unwrap();
    let (got, end) = done.await.unwrap();
    let secs = (end - t0).as_secs_f64();
    assert_eq!(got, data);
    // The bucket starts empty, so 1 MB needs about a full second.
    assert!((0.94..=1.3).contains(&secs), "{secs}");
}

#[tokio::test]
async fn unreachable_target_resets_the_client() {
    let gone = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let target = gone.local_addr().unwrap();
    drop(gone);
    let proxy = start_proxy("127.0.0.1:0", &target.to_string(), NetworkProfile::unconstrained(), 1)
        .await
        .unwrap();
    let mut c = TcpStream::connect(proxy.addr()).await.unwrap();
    let mut b = [0u8; 1];
    let r = c.read(&mut b).await;
    match r {
        Err(e) => assert_eq!(e.kind(), std::io::ErrorKind::ConnectionReset),
        Ok(n) => panic!("expected reset, read {n} bytes"),
    }
}

#[tokio::test]
async fn invalid_configuration_is_refused() {
    let bad = profile(10, 20, None);
    assert!(matches!(
        start_proxy("127.0.0.1:0", "127.0.0.1:9", bad, 1).await,
        Err(NetProxyError::InvalidToxic(_))
    ));
    let taken = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = taken.local_addr().unwrap().to_string();
    assert!(matches!(
        start_proxy(&addr, "127.0.0.1:9", NetworkProfile::unconstrained(), 1).await,
        Err(NetProxyError::Bind { .. })
    ));
}

#[tokio::test]
async fn admin_endpoint_reports_stats() {
    let (target, done) = sink().await;
    let proxy = start_proxy("127.0.0.1:0", &target.to_string(), NetworkProfile::unconstrained(), 1)
        .await
        .unwrap();
    let admin = proxy
        .serve_admin(TcpListener::bind("127.0.0.1:0").await.unwrap())
        .unwrap();
    let mut c = TcpStream::connect(proxy.addr()).await.unwrap();
    c.write_all(b"hello").await.unwrap();
    c.shutdown().await.unwrap();
    done.await.unwrap();
    let stats: serde_json::Value = reqwest::get(format!("{}/stats", admin.base_url()))
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(stats["bytes_up"], 5);
    assert_eq!(stats["connections"], 1);
}

#[tokio::test]
async fn shutdown_stops_accepting() {
    let (target, _done) = sink().await;
    let proxy = start_proxy("127.0.0.1:0", &target.to_string(), NetworkProfile::unconstrained(), 1)
        .await
        .unwrap();
    let addr = proxy.addr();
    proxy.shutdown();
    tokio::time::sleep(Duration::from_millis(50)).await;
    assert!(TcpStream::connect(addr).await.is_err());
}
