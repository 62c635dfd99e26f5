//! Per-component resource sampling, phase windows, aggregation into the
//! metrics table, and CSV output.

pub mod alloc;
pub mod component;
mod csv_io;
pub mod procfs;
pub mod sampler;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::llm::TokenUsage;

pub use component::{ComponentThread, ThreadMeter};
pub use csv_io::{emit_csv, read_answers_csv, read_metrics_csv, AnswerRow, CsvFiles};
pub use sampler::{Probe, Reading, Sampler};

/// Bytes per reported megabyte.
pub const MB: f64 = 1024.0 * 1024.0;

#[derive(Debug, thiserror::Error)]
pub enum TelemetryError {
    #[error("component {component} has fewer than two samples in the {phase} window")]
    MissingSamples { component: String, phase: Phase },
    #[error("component {0} has no tier label")]
    Unlabelled(String),
    #[error("invalid phase window: {0}")]
    BadWindow(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Cloud,
    Edge,
}

impl Tier {
    pub const ALL: [Tier; 2] = [Tier::Cloud, Tier::Edge];

    pub fn as_str(self) -> &'static str {
        match self {
            Tier::Cloud => "cloud",
            Tier::Edge => "edge",
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Tier {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "cloud" => Ok(Tier::Cloud),
            "edge" => Ok(Tier::Edge),
            _ => Err(format!("unknown tier {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Loading,
    Qa,
}

impl Phase {
    pub const ALL: [Phase; 2] = [Phase::Loading, Phase::Qa];

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Loading => "loading",
            Phase::Qa => "qa",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Phase {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "loading" => Ok(Phase::Loading),
            "qa" => Ok(Phase::Qa),
            _ => Err(format!("unknown phase {s:?}")),
        }
    }
}

/// Component names used by the orchestrator.
pub mod components {
    pub const COORDINATOR: &str = "coordinator";
    pub const NETPROXY: &str = "netproxy";
    pub const MEMORY: &str = "memory";
    pub const RESPONDER: &str = "responder";
    pub const LLM_PROXY: &str = "llm-proxy";
    pub const LLM: &str = "llm";
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentLabel {
    pub component: String,
    pub tier: Tier,
}

/// Coordinator and the impairment proxy sit in the cloud; the memory agent,
/// responder and the model path sit at the edge.
pub fn default_labels() -> Vec<ComponentLabel> {
    use components::*;
    [
        (COORDINATOR, Tier::Cloud),
        (NETPROXY, Tier::Cloud),
        (MEMORY, Tier::Edge),
        (RESPONDER, Tier::Edge),
        (LLM_PROXY, Tier::Edge),
        (LLM, Tier::Edge),
    ]
    .into_iter()
    .map(|(c, t)| ComponentLabel {
        component: c.to_string(),
        tier: t,
    })
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceSample {
    pub component: String,
    /// Milliseconds since the sampler started.
    pub timestamp_ms: f64,
    /// Cumulative CPU time.
    pub cpu_time_ms: f64,
    pub ram_bytes: u64,
    /// Cumulative.
    pub disk_bytes_written: u64,
    /// Cumulative, transmitted plus received.
    pub net_bytes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseWindow {
    pub phase: Phase,
    pub start_ms: f64,
    pub end_ms: f64,
}

impl PhaseWindow {
    fn contains(&self, t: f64) -> bool {
        t >= self.start_ms && t <= self.end_ms
    }

    pub fn duration_ms(&self) -> f64 {
        self.end_ms - self.start_ms
    }
}

/// How per-component RAM readings reduce to one figure per tier.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RamReduction {
    /// Mean over components of each component's peak.
    #[default]
    Peak,
    /// Mean over components of each component's mean.
    Mean,
}

impl FromStr for RamReduction {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "peak" => Ok(Self::Peak),
            "mean" => Ok(Self::Mean),
            _ => Err(format!("unknown RAM reduction {s:?}; expected peak or mean")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub count: u64,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
}

impl LatencyStats {
    /// Nearest-rank percentiles.
    pub fn from_samples(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        let mut v = samples.to_vec();
        v.sort_by(f64::total_cmp);
        let rank = |q: f64| v[((q * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1];
        Self {
            count: v.len() as u64,
            mean_ms: v.iter().sum::<f64>() / v.len() as f64,
            p50_ms: rank(0.5),
            p95_ms: rank(0.95),
            max_ms: v[v.len() - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub experiment: String,
    pub phase: Phase,
    pub backend: String,
    pub tier: Tier,
    pub cpu_minutes: f64,
    pub ram_mb: f64,
    pub disk_mb: f64,
    pub network_mb: f64,
    pub duration_minutes: f64,
    pub tokens: TokenUsage,
    pub latency: LatencyStats,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub rows: Vec<MetricsRow>,
}

impl MetricsTable {
    pub fn row(&self, phase: Phase, tier: Tier) -> Option<&MetricsRow> {
        self.rows.iter().find(|r| r.phase == phase && r.tier == tier)
    }

    fn row_mut(&mut self, phase: Phase, tier: Tier) -> Option<&mut MetricsRow> {
        self.rows
            .iter_mut()
            .find(|r| r.phase == phase && r.tier == tier)
    }

    /// Books token usage against a row; no-op if the row is absent.
    pub fn add_tokens(&mut self, phase: Phase, tier: Tier, usage: TokenUsage) {
        if let Some(r) = self.row_mut(phase, tier) {
            r.tokens += usage;
        }
    }

    pub fn set_latency(&mut self, phase: Phase, tier: Tier, samples_ms: &[f64]) {
        if let Some(r) = self.row_mut(phase, tier) {
            r.latency = LatencyStats::from_samples(samples_ms);
        }
    }

    pub fn total_tokens(&self) -> TokenUsage {
        self.rows.iter().map(|r| r.tokens).sum()
    }

    /// Appends another table's rows, e.g. to build a cross-cell table.
    pub fn extend(&mut self, other: MetricsTable) {
        self.rows.extend(other.rows);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateOptions {
    pub experiment: String,
    pub backend: String,
    pub ram: RamReduction,
}

struct Deltas {
    cpu_ms: f64,
    ram_bytes: f64,
    disk: u64,
    net: u64,
}

fn component_deltas(
    samples: &[&ResourceSample],
    component: &str,
    window: &PhaseWindow,
    ram: RamReduction,
) -> Result<Deltas, TelemetryError> {
    let mut in_window: Vec<&ResourceSample> = samples
        .iter()
        .copied()
        .filter(|s| s.component == component && window.contains(s.timestamp_ms))
        .collect();
    if in_window.len() < 2 {
        return Err(TelemetryError::MissingSamples {
            component: component.to_string(),
            phase: window.phase,
        });
    }
    in_window.sort_by(|a, b| a.timestamp_ms.total_cmp(&b.timestamp_ms));
    let first = in_window[0];
    let last = in_window[in_window.len() - 1];
    let ram_bytes = match ram {
        RamReduction::Peak => in_window.iter().map(|s| s.ram_bytes).max().unwrap_or(0) as f64,
        RamReduction::Mean => {
            in_window.iter().map(|s| s.ram_bytes as f64).sum::<f64>() / in_window.len() as f64
        }
    };
    Ok(Deltas {
        cpu_ms: (last.cpu_time_ms - first.cpu_time_ms).max(0.0),
        ram_bytes,
        disk: last.disk_bytes_written.saturating_sub(first.disk_bytes_written),
        net: last.net_bytes.saturating_sub(first.net_bytes),
    })
}

/// Reduces samples to one row per (phase, tier).
///
/// CPU minutes, disk and network are sums of per-component deltas inside the
/// window; RAM is the mean over the tier's components of each component's
/// peak (or mean) reading. Tokens and latency start empty and are booked
/// with [`MetricsTable::add_tokens`] and [`MetricsTable::set_latency`].
pub fn aggregate(
    samples: &[ResourceSample],
    windows: &[PhaseWindow],
    labels: &[ComponentLabel],
    opts: &AggregateOptions,
) -> Result<MetricsTable, TelemetryError> {
    let mut seen = BTreeSet::new();
    for w in windows {
        if !(w.end_ms > w.start_ms) {
            return Err(TelemetryError::BadWindow(format!("{} ends before it starts", w.phase)));
        }
        if !seen.insert(w.phase) {
            return Err(TelemetryError::BadWindow(format!("{} appears twice", w.phase)));
        }
    }
    for (i, a) in windows.iter().enumerate() {
        for b in &windows[i + 1..] {
            if a.start_ms < b.end_ms && b.start_ms < a.end_ms {
                return Err(TelemetryError::BadWindow(format!("{} overlaps {}", a.phase, b.phase)));
            }
        }
    }
    let sampled: BTreeSet<&str> = samples.iter().map(|s| s.component.as_str()).collect();
    for c in &sampled {
        if !labels.iter().any(|l| l.component == *c) {
            return Err(TelemetryError::Unlabelled(c.to_string()));
        }
    }
    let refs: Vec<&ResourceSample> = samples.iter().collect();

    let mut rows = Vec::new();
    for w in windows {
        let mut per_tier: BTreeMap<Tier, Vec<Deltas>> = BTreeMap::new();
        for l in labels {
            let d = component_deltas(&refs, &l.component, w, opts.ram)?;
            per_tier.entry(l.tier).or_default().push(d);
        }
        for tier in Tier::ALL {
            let ds = per_tier.remove(&tier).unwrap_or_default();
            let ram_mb = if ds.is_empty() {
                0.0
            } else {
                ds.iter().map(|d| d.ram_bytes).sum::<f64>() / ds.len() as f64 / MB
            };
            rows.push(MetricsRow {
                experiment: opts.experiment.clone(),
                phase: w.phase,
                backend: opts.backend.clone(),
                tier,
                cpu_minutes: ds.iter().map(|d| d.cpu_ms).sum::<f64>() / 60_000.0,
                ram_mb,
                disk_mb: ds.iter().map(|d| d.disk).sum::<u64>() as f64 / MB,
                network_mb: ds.iter().map(|d| d.net).sum::<u64>() as f64 / MB,
                duration_minutes: w.duration_ms() / 60_000.0,
                tokens: TokenUsage::default(),
                latency: LatencyStats::default(),
            });
        }
    }
    Ok(MetricsTable { rows })
}

/// Flat `key value` lines for the live `/metrics` endpoints.
pub fn render_flat_metrics<'a, I>(pairs: I) -> String
where
    I: IntoIterator<Item = (&'a str, String)>,
{
    pairs
        .into_iter()
        .map(|(k, v)| format!("{k} {v}\n"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(c: &str, t: f64, cpu: f64, ram: u64, disk: u64, net: u64) -> ResourceSample {
        ResourceSample {
            component: c.into(),
            timestamp_ms: t,
            cpu_time_ms: cpu,
            ram_bytes: ram,
            disk_bytes_written: disk,
            net_bytes: net,
        }
    }

    fn label(c: &str, tier: Tier) -> ComponentLabel {
        ComponentLabel {
            component: c.into(),
            tier,
        }
    }

    fn opts() -> AggregateOptions {
        AggregateOptions {
            experiment: "unconstrained".into(),
            backend: "vector".into(),
            ram: RamReduction::Peak,
        }
    }

    const LOADING: PhaseWindow = PhaseWindow {
        phase: Phase::Loading,
        start_ms: 0.0,
        end_ms: 120_000.0,
    };

    #[test]
    fn one_cpu_minute() {
        let samples = [s("a", 0.0, 0.0, 0, 0, 0), s("a", 60_000.0, 60_000.0, 0, 0, 0)];
        let t = aggregate(&samples, &[LOADING], &[label("a", Tier::Cloud)], &opts()).unwrap();
        let r = t.row(Phase::Loading, Tier::Cloud).unwrap();
        assert_eq!(r.cpu_minutes, 1.0);
        assert_eq!(r.duration_minutes, 2.0);
        // Every (phase, tier) key exists even for an empty tier.
        assert_eq!(t.row(Phase::Loading, Tier::Edge).unwrap().cpu_minutes, 0.0);
    }

    #[test]
    fn network_deltas_add_up_per_tier() {
        let mb = |x: f64| (x * MB).round() as u64;
        let samples = [
            s("coordinator", 0.0, 0.0, 0, 0, 5),
            s("coordinator", 1000.0, 0.0, 0, 0, 5 + mb(10.0)),
            s("netproxy", 0.0, 0.0, 0, 0, 0),
            s("netproxy", 1000.0, 0.0, 0, 0, mb(12.1)),
        ];
        let labels = [label("coordinator", Tier::Cloud), label("netproxy", Tier::Cloud)];
        let t = aggregate(&samples, &[LOADING], &labels, &opts()).unwrap();
        let net = t.row(Phase::Loading, Tier::Cloud).unwrap().network_mb;
        assert!((net - 22.1).abs() < 1e-6, "{net}");
    }

    #[test]
    fn ram_is_mean_of_peaks_or_means() {
        let samples = [
            s("a", 0.0, 0.0, 100, 0, 0),
            s("a", 10.0, 0.0, 300, 0, 0),
            s("b", 0.0, 0.0, 50, 0, 0),
            s("b", 10.0, 0.0, 50, 0, 0),
        ];
        let labels = [label("a", Tier::Edge), label("b", Tier::Edge)];
        let peak = aggregate(&samples, &[LOADING], &labels, &opts()).unwrap();
        assert_eq!(peak.row(Phase::Loading, Tier::Edge).unwrap().ram_mb, 175.0 / MB);
        let mean = aggregate(
            &samples,
            &[LOADING],
            &labels,
            &AggregateOptions {
                ram: RamReduction::Mean,
                ..opts()
            },
        )
        .unwrap();
        assert_eq!(mean.row(Phase::Loading, Tier::Edge).unwrap().ram_mb, 125.0 / MB);
    }

    #[test]
    fn empty_window_is_missing_samples() {
        let err = aggregate(&[], &[LOADING], &[label("a", Tier::Cloud)], &opts()).unwrap_err();
        assert!(matches!(err, TelemetryError::MissingSamples { .. }));
    }

    #[test]
    fn bad_windows() {
        let back = PhaseWindow {
            phase: Phase::Qa,
            start_ms: 5.0,
            end_ms: 5.0,
        };
        assert!(matches!(
            aggregate(&[], &[back], &[], &opts()),
            Err(TelemetryError::BadWindow(_))
        ));
        let overlapping = PhaseWindow {
            phase: Phase::Qa,
            start_ms: 100_000.0,
            end_ms: 200_000.0,
        };
        assert!(matches!(
            aggregate(&[], &[LOADING, overlapping], &[], &opts()),
            Err(TelemetryError::BadWindow(_))
        ));
    }

    #[test]
    fn unlabelled_component_is_rejected() {
        let samples = [s("ghost", 0.0, 0.0, 0, 0, 0), s("ghost", 1.0, 0.0, 0, 0, 0)];
        assert!(matches!(
            aggregate(&samples, &[LOADING], &[], &opts()),
            Err(TelemetryError::Unlabelled(_))
        ));
    }

    #[test]
    fn latency_percentiles() {
        let l = LatencyStats::from_samples(&[5.0, 1.0, 3.0, 2.0, 4.0]);
        assert_eq!((l.count, l.mean_ms, l.p50_ms, l.max_ms), (5, 3.0, 3.0, 5.0));
        assert_eq!(l.p95_ms, 5.0);
        assert_eq!(LatencyStats::from_samples(&[]), LatencyStats::default());
    }

    #[test]
    fn default_labels_cover_every_component_once() {
        let l = default_labels();
        let names: BTreeSet<_> = l.iter().map(|l| l.component.as_str()).collect();
        assert_eq!(names.len(), l.len());
        assert!(l.iter().any(|x| x.tier == Tier::Cloud));
        assert!(l.iter().any(|x| x.tier == Tier::Edge));
    }
}
