//! Binomial confidence intervals and two-proportion tests.

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum StatsError {
    #[error("invalid counts: {k} successes out of {n}")]
    InvalidCounts { k: u64, n: u64 },
}

/// Conventional two-sided critical value for 95% coverage.
pub const Z_95: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub low: f64,
    pub high: f64,
    pub level: f64,
}

fn check(k: u64, n: u64) -> Result<(), StatsError> {
    if n == 0 || k > n {
        Err(StatsError::InvalidCounts { k, n })
    } else {
        Ok(())
    }
}

/// Wilson score interval for `k` successes in `n` trials at critical value
/// `z` (use [`Z_95`] for the 95% level).
pub fn wilson_ci(k: u64, n: u64, z: f64) -> Result<ConfidenceInterval, StatsError> {
    check(k, n)?;
    let n_f = n as f64;
    let p = k as f64 / n_f;
    let z2 = z * z;
    let denom = 1.0 + z2 / n_f;
    let centre = (p + z2 / (2.0 * n_f)) / denom;
    let half = z * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / denom;
    // Clamp the exact boundary cases against rounding.
    let low = if k == 0 { 0.0 } else { (centre - half).max(0.0) };
    let high = if k == n { 1.0 } else { (centre + half).min(1.0) };
    Ok(ConfidenceInterval {
        low: low.min(p),
        high: high.max(p),
        level: ((2.0 * normal_cdf(z) - 1.0) * 1e4).round() / 1e4,
    })
}

/// Standard normal CDF via the complementary error function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZTest {
    pub z: f64,
    /// Two-sided.
    pub p: f64,
}

/// Pooled two-proportion z-test without continuity correction. A pooled
/// proportion of exactly 0 or 1 gives `z = 0, p = 1`.
pub fn two_prop_z(k1: u64, n1: u64, k2: u64, n2: u64) -> Result<ZTest, StatsError> {
    check(k1, n1)?;
    check(k2, n2)?;
    let (n1f, n2f) = (n1 as f64, n2 as f64);
    let pooled = (k1 + k2) as f64 / (n1f + n2f);
    if pooled <= 0.0 || pooled >= 1.0 {
        return Ok(ZTest { z: 0.0, p: 1.0 });
    }
    let se = (pooled * (1.0 - pooled) * (1.0 / n1f + 1.0 / n2f)).sqrt();
    let z = (k1 as f64 / n1f - k2 as f64 / n2f) / se;
    let p = statrs::function::erf::erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0);
    Ok(ZTest { z, p })
}
