//! TCP forwarding proxy with latency, jitter and bandwidth toxics.

mod bucket;
mod proxy;

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use bucket::TokenBucket;
pub use proxy::{start_proxy, start_proxy_on, ProxyHandle};

/// Read size per forwarded chunk.
pub const CHUNK_BYTES: usize = 16 * 1024;
/// Default token-bucket depth.
pub const DEFAULT_BURST_BYTES: u64 = 64 * 1024;

#[derive(Debug, thiserror::Error)]
pub enum NetProxyError {
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: String,
        source: std::io::Error,
    },
    #[error("invalid toxic: {0}")]
    InvalidToxic(String),
    #[error("cannot resolve {0}")]
    Resolve(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Client to target.
    Upstream,
    /// Target to client.
    Downstream,
    Both,
}

impl Direction {
    pub fn covers_upstream(self) -> bool {
        matches!(self, Direction::Upstream | Direction::Both)
    }

    pub fn covers_downstream(self) -> bool {
        matches!(self, Direction::Downstream | Direction::Both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToxicConfig {
    pub latency_ms: u64,
    pub jitter_ms: u64,
    /// `None` is unlimited.
    pub bandwidth_bytes_per_s: Option<u64>,
    pub direction: Direction,
}

impl ToxicConfig {
    pub const NONE: ToxicConfig = ToxicConfig {
        latency_ms: 0,
        jitter_ms: 0,
        bandwidth_bytes_per_s: None,
        direction: Direction::Both,
    };

    pub fn validate(&self) -> Result<(), NetProxyError> {
        if self.jitter_ms > self.latency_ms {
            return Err(NetProxyError::InvalidToxic(format!(
                "jitter {} ms exceeds latency {} ms; delays would go negative",
                self.jitter_ms, self.latency_ms
            )));
        }
        if self.bandwidth_bytes_per_s == Some(0) {
            return Err(NetProxyError::InvalidToxic("bandwidth must be positive".into()));
        }
        Ok(())
    }

    pub fn is_passthrough(&self) -> bool {
        self.latency_ms == 0 && self.bandwidth_bytes_per_s.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileName {
    Unconstrained,
    Constrained,
}

impl fmt::Display for ProfileName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProfileName::Unconstrained => "unconstrained",
            ProfileName::Constrained => "constrained",
        })
    }
}

impl FromStr for ProfileName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "unconstrained" => Ok(Self::Unconstrained),
            "constrained" => Ok(Self::Constrained),
            _ => Err(format!("unknown profile {s:?}; expected unconstrained or constrained")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkProfile {
    pub name: ProfileName,
    pub toxic: ToxicConfig,
}

impl NetworkProfile {
    pub fn unconstrained() -> Self {
        Self {
            name: ProfileName::Unconstrained,
            toxic: ToxicConfig::NONE,
        }
    }

    /// 200 ms latency, 50 ms jitter, 1 MB/s (8 Mbit/s), both directions.
    pub fn constrained() -> Self {
        Self {
            name: ProfileName::Constrained,
            toxic: ToxicConfig {
                latency_ms: 200,
                jitter_ms: 50,
                bandwidth_bytes_per_s: Some(1_000_000),
                direction: Direction::Both,
            },
        }
    }

    pub fn named(name: ProfileName) -> Self {
        match name {
            ProfileName::Unconstrained => Self::unconstrained(),
            ProfileName::Constrained => Self::constrained(),
        }
    }
}

/// Counters reported by a running proxy.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProxyStats {
    pub bytes_up: u64,
    pub bytes_down: u64,
    pub connections: u64,
    /// Measured hold time of each delayed chunk, rounded to whole ms.
    pub added_delay_samples_ms: Vec<u64>,
}

/// Uniform integer-millisecond delays on `[latency - jitter, latency + jitter]`.
#[derive(Debug, Clone)]
pub struct LatencySampler {
    latency_ms: u64,
    jitter_ms: u64,
    rng: ChaCha8Rng,
}

impl LatencySampler {
    pub fn new(latency_ms: u64, jitter_ms: u64, seed: u64) -> Self {
        Self {
            latency_ms,
            jitter_ms: jitter_ms.min(latency_ms),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn sample(&mut self) -> Duration {
        Duration::from_millis(sample_delay_ms(self.latency_ms, self.jitter_ms, &mut self.rng))
    }
}

/// One delay draw; jitter is clamped to the latency so the result is never
/// negative.
pub fn sample_delay_ms<R: Rng + ?Sized>(latency_ms: u64, jitter_ms: u64, rng: &mut R) -> u64 {
    let j = jitter_ms.min(latency_ms);
    if j == 0 {
        latency_ms
    } else {
        rng.random_range(latency_ms - j..=latency_ms + j)
    }
}

/// Holds `chunk` for a sampled delay, then returns it with the delay used.
pub async fn apply_latency<T, R: Rng + ?Sized>(
    chunk: T,
    latency_ms: u64,
    jitter_ms: u64,
    rng: &mut R,
) -> (T, Duration) {
    let d = Duration::from_millis(sample_delay_ms(latency_ms, jitter_ms, rng));
    if !d.is_zero() {
        precise_sleep_until(tokio::time::Instant::now() + d).await;
    }
    (chunk, d)
}

/// Sleeps on the timer until shortly before `deadline`, then yields until
/// it passes. The timer alone rounds up to the next millisecond tick.
pub async fn precise_sleep_until(deadline: tokio::time::Instant) {
    const SPIN: Duration = Duration::from_millis(2);
    if let Some(coarse) = deadline.checked_sub(SPIN) {
        tokio::time::sleep_until(coarse).await;
    }
    while tokio::time::Instant::now() < deadline {
        tokio::task::yield_now().await;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles() {
        let u = NetworkProfile::unconstrained();
        assert!(u.toxic.is_passthrough());
        let c = NetworkProfile::constrained();
        assert_eq!((c.toxic.latency_ms, c.toxic.jitter_ms), (200, 50));
        assert_eq!(c.toxic.bandwidth_bytes_per_s, Some(1_000_000));
        c.toxic.validate().unwrap();
        assert_eq!("constrained".parse(), Ok(ProfileName::Constrained));
        assert!("lossy".parse::<ProfileName>().is_err());
    }

    #[test]
    fn jitter_above_latency_is_rejected() {
        let t = ToxicConfig {
            latency_ms: 10,
            jitter_ms: 20,
            ..ToxicConfig::NONE
        };
        assert!(matches!(t.validate(), Err(NetProxyError::InvalidToxic(_))));
        let t = ToxicConfig {
            bandwidth_bytes_per_s: Some(0),
            ..ToxicConfig::NONE
        };
        assert!(t.validate().is_err());
    }

    #[test]
    fn degenerate_samplers() {
        let mut s = LatencySampler::new(0, 0, 1);
        assert_eq!(s.sample(), Duration::ZERO);
        let mut s = LatencySampler::new(200, 0, 1);
        assert!((0..100).all(|_| s.sample() == Duration::from_millis(200)));
    }

    #[test]
    fn uniform_sampler_bounds_and_mean() {
        let mut s = LatencySampler::new(200, 50, 42);
        let draws: Vec<u64> = (0..1000).map(|_| s.sample().as_millis() as u64).collect();
        assert!(draws.iter().all(|d| (150..=250).contains(d)));
        let mean = draws.iter().sum::<u64>() as f64 / draws.len() as f64;
        assert!((mean - 200.0).abs() <= 10.0, "mean {mean}");
    }

    #[test]
    fn sampler_is_reproducible() {
        let a: Vec<_> = {
            let mut s = LatencySampler::new(200, 50, 9);
            (0..20).map(|_| s.sample()).collect()
        };
        let b: Vec<_> = {
            let mut s = LatencySampler::new(200, 50, 9);
            (0..20).map(|_| s.sample()).collect()
        };
        assert_eq!(a, b);
    }

    #[tokio::test]
    async fn apply_latency_holds_the_chunk() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t0 = std::time::Instant::now();
        let (chunk, d) = apply_latency(vec![1u8, 2, 3], 30, 10, &mut rng).await;
        assert_eq!(chunk, [1, 2, 3]);
        assert!((20..=40).contains(&(d.as_millis() as u64)));
        assert!(t0.elapsed() >= d);
        let (_, zero) = apply_latency((), 0, 0, &mut rng).await;
        assert_eq!(zero, Duration::ZERO);
    }
}
