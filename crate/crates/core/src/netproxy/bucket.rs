use std::time::{Duration, Instant};

/// Token bucket pacing a byte stream.
///
/// The bucket starts empty and may go into debt: [`reserve`](Self::reserve)
/// always succeeds and tells the caller when the reserved bytes may leave.
/// Over any window of length `Δ` at most `rate·Δ + burst` bytes are released.
#[derive(Debug, Clone)]
pub struct TokenBucket {
    rate: f64,
    burst: f64,
    tokens: f64,
    last: Instant,
}

impl TokenBucket {
    pub fn new(rate_bytes_per_s: u64, burst_bytes: u64, now: Instant) -> Self {
        assert!(rate_bytes_per_s > 0, "rate must be positive");
        Self {
            rate: rate_bytes_per_s as f64,
            burst: burst_bytes as f64,
            tokens: 0.0,
            last: now,
        }
    }

    /// Takes `n` bytes worth of tokens and returns the instant at which they
    /// are covered.
    pub fn reserve(&mut self, n: usize, now: Instant) -> Instant {
        if now > self.last {
            let refill = (now - self.last).as_secs_f64() * self.rate;
            self.tokens = (self.tokens + refill).min(self.burst);
            self.last = now;
        }
        self.tokens -= n as f64;
        if self.tokens >= 0.0 {
            now
        } else {
            self.last + Duration::from_secs_f64(-self.tokens / self.rate)
        }
    }
}
