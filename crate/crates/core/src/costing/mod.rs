//! Resource and token cost under a per-hour cloud price list.

mod chart;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::llm::TokenUsage;
use crate::telemetry::{MetricsTable, Tier};

pub use chart::render_svg;

#[derive(Debug, thiserror::Error)]
pub enum CostError {
    #[error("no token price configured for model {0:?}")]
    MissingPrice(String),
    #[error("price {0} must be a finite, non-negative number")]
    InvalidPrice(String),
    #[error("reading pricing file: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing pricing file: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenPrice {
    pub input_per_1k: f64,
    pub output_per_1k: f64,
}

impl TokenPrice {
    pub fn cost(&self, usage: TokenUsage) -> f64 {
        usage.prompt_tokens as f64 / 1000.0 * self.input_per_1k
            + usage.completion_tokens as f64 / 1000.0 * self.output_per_1k
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricingModel {
    pub vcpu_per_hour: f64,
    pub ram_gb_per_hour: f64,
    pub storage_gb_per_hour: f64,
    pub network_per_gb: f64,
    #[serde(default)]
    pub token_prices: BTreeMap<String, TokenPrice>,
}

/// The shipped `config/pricing.json`.
pub const DEFAULT_PRICING_JSON: &str = include_str!("../../../../config/pricing.json");

impl PricingModel {
    pub fn from_json(raw: &str) -> Result<Self, CostError> {
        let p: PricingModel = serde_json::from_str(raw)?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Self, CostError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn default_model() -> Self {
        Self::from_json(DEFAULT_PRICING_JSON).expect("shipped pricing file is valid")
    }

    pub fn validate(&self) -> Result<(), CostError> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        for (name, v) in [
            ("vcpu_per_hour", self.vcpu_per_hour),
            ("ram_gb_per_hour", self.ram_gb_per_hour),
            ("storage_gb_per_hour", self.storage_gb_per_hour),
            ("network_per_gb", self.network_per_gb),
        ] {
            if !ok(v) {
                return Err(CostError::InvalidPrice(name.into()));
            }
        }
        for (model, p) in &self.token_prices {
            if !ok(p.input_per_1k) || !ok(p.output_per_1k) {
                return Err(CostError::InvalidPrice(format!("token_prices.{model}")));
            }
        }
        Ok(())
    }

    pub fn token_price(&self, model: &str) -> Result<TokenPrice, CostError> {
        self.token_prices
            .get(model)
            .copied()
            .ok_or_else(|| CostError::MissingPrice(model.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Compute,
    Ram,
    Storage,
    Network,
    Tokens,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::Compute,
        Category::Ram,
        Category::Storage,
        Category::Network,
        Category::Tokens,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Compute => "compute",
            Category::Ram => "ram",
            Category::Storage => "storage",
            Category::Network => "network",
            Category::Tokens => "tokens",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TierCost {
    pub compute: f64,
    pub ram: f64,
    pub storage: f64,
    pub network: f64,
    pub tokens: f64,
}

impl TierCost {
    pub fn get(&self, c: Category) -> f64 {
        match c {
            Category::Compute => self.compute,
            Category::Ram => self.ram,
            Category::Storage => self.storage,
            Category::Network => self.network,
            Category::Tokens => self.tokens,
        }
    }

    fn slot(&mut self, c: Category) -> &mut f64 {
        match c {
            Category::Compute => &mut self.compute,
            Category::Ram => &mut self.ram,
            Category::Storage => &mut self.storage,
            Category::Network => &mut self.network,
            Category::Tokens => &mut self.tokens,
        }
    }

    pub fn total(&self) -> f64 {
        Category::ALL.iter().map(|&c| self.get(c)).sum()
    }
}

/// USD per tier and category. Totals are derived, never stored, so they
/// cannot drift from the cells.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub cloud: TierCost,
    pub edge: TierCost,
}

impl CostBreakdown {
    pub fn tier(&self, t: Tier) -> &TierCost {
        match t {
            Tier::Cloud => &self.cloud,
            Tier::Edge => &self.edge,
        }
    }

    fn tier_mut(&mut self, t: Tier) -> &mut TierCost {
        match t {
            Tier::Cloud => &mut self.cloud,
            Tier::Edge => &mut self.edge,
        }
    }

    pub fn get(&self, t: Tier, c: Category) -> f64 {
        self.tier(t).get(c)
    }

    pub fn charge(&mut self, t: Tier, c: Category, usd: f64) {
        *self.tier_mut(t).slot(c) += usd;
    }

    pub fn total(&self) -> f64 {
        self.cloud.total() + self.edge.total()
    }

    pub fn category_total(&self, c: Category) -> f64 {
        self.cloud.get(c) + self.edge.get(c)
    }
}

impl std::ops::Add for CostBreakdown {
    type Output = CostBreakdown;
    fn add(mut self, rhs: CostBreakdown) -> CostBreakdown {
        for t in Tier::ALL {
            for c in Category::ALL {
                self.charge(t, c, rhs.get(t, c));
            }
        }
        self
    }
}

/// Prices every row of `table`. Compute is CPU-hours times the vCPU rate;
/// RAM and storage are GB occupancy times the phase duration in hours;
/// network is GB transferred; tokens use `model`'s per-1k rates.
pub fn compute_cost(
    table: &MetricsTable,
    pricing: &PricingModel,
    model: &str,
) -> Result<CostBreakdown, CostError> {
    let needs_tokens = table.rows.iter().any(|r| r.tokens.total_tokens > 0);
    let price = if needs_tokens {
        Some(pricing.token_price(model)?)
    } else {
        None
    };
    let mut out = CostBreakdown::default();
    for r in &table.rows {
        let hours = r.duration_minutes / 60.0;
        out.charge(r.tier, Category::Compute, r.cpu_minutes / 60.0 * pricing.vcpu_per_hour);
        out.charge(r.tier, Category::Ram, r.ram_mb / 1024.0 * hours * pricing.ram_gb_per_hour);
        out.charge(
            r.tier,
            Category::Storage,
            r.disk_mb / 1024.0 * hours * pricing.storage_gb_per_hour,
        );
        out.charge(r.tier, Category::Network, r.network_mb / 1024.0 * pricing.network_per_gb);
        if let Some(p) = price {
            out.charge(r.tier, Category::Tokens, p.cost(r.tokens));
        }
    }
    Ok(out)
}

/// `(b - a) / a` in percent; `None` when `a` is zero.
pub fn pct_delta(a: f64, b: f64) -> Option<f64> {
    (a != 0.0).then(|| (b - a) / a * 100.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryDelta {
    pub tier: Tier,
    pub category: Category,
    pub a_usd: f64,
    pub b_usd: f64,
    /// Positive when `b` costs more than `a`.
    pub delta_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TcoComparison {
    pub a: String,
    pub b: String,
    pub total_a_usd: f64,
    pub total_b_usd: f64,
    /// How much more `b` costs than `a`, in percent of `a`.
    pub total_delta_pct: Option<f64>,
    pub cells: Vec<CategoryDelta>,
}

pub fn tco_compare(
    a_name: &str,
    a: &CostBreakdown,
    b_name: &str,
    b: &CostBreakdown,
) -> TcoComparison {
    let mut cells = Vec::new();
    for t in Tier::ALL {
        for c in Category::ALL {
            let (x, y) = (a.get(t, c), b.get(t, c));
            cells.push(CategoryDelta {
                tier: t,
                category: c,
                a_usd: x,
                b_usd: y,
                delta_pct: pct_delta(x, y),
            });
        }
    }
    TcoComparison {
        a: a_name.into(),
        b: b_name.into(),
        total_a_usd: a.total(),
        total_b_usd: b.total(),
        total_delta_pct: pct_delta(a.total(), b.total()),
        cells,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::telemetry::{LatencyStats, MetricsRow, Phase};

    fn row(tier: Tier, cpu: f64, ram: f64, disk: f64, net: f64, minutes: f64) -> MetricsRow {
        MetricsRow {
            experiment: "unconstrained".into(),
            phase: Phase::Loading,
            backend: "graph".into(),
            tier,
            cpu_minutes: cpu,
            ram_mb: ram,
            disk_mb: disk,
            network_mb: net,
            duration_minutes: minutes,
            tokens: TokenUsage::default(),
            latency: LatencyStats::default(),
        }
    }

    #[test]
    fn shipped_pricing() {
        let p = PricingModel::default_model();
        assert_eq!(p.vcpu_per_hour, 0.04048);
        assert_eq!(p.network_per_gb, 0.09);
        assert!(p.token_price("gpt-4o-mini").is_ok());
        assert!(matches!(p.token_price("nope"), Err(CostError::MissingPrice(_))));
    }

    #[test]
    fn reference_cells() {
        let p = PricingModel::default_model();
        let t = MetricsTable {
            rows: vec![row(Tier::Cloud, 17.1, 0.0, 0.0, 1332.3, 180.32)],
        };
        let c = compute_cost(&t, &p, "gpt-4o-mini").unwrap();
        assert!((c.cloud.compute - 0.011_537).abs() < 1e-6, "{}", c.cloud.compute);
        assert!((c.cloud.network - 0.117_1).abs() < 1e-4, "{}", c.cloud.network);
        assert_eq!(c.edge, TierCost::default());
    }

    #[test]
    fn gb_hours() {
        let p = PricingModel::default_model();
        let t = MetricsTable {
            rows: vec![row(Tier::Edge, 0.0, 2048.0, 1024.0, 0.0, 120.0)],
        };
        let c = compute_cost(&t, &p, "gpt-4o-mini").unwrap();
        assert!((c.edge.ram - 2.0 * 2.0 * 0.004445).abs() < 1e-15);
        assert!((c.edge.storage - 2.0 * 0.000109).abs() < 1e-15);
    }

    #[test]
    fn tokens_need_a_price() {
        let mut t = MetricsTable {
            rows: vec![row(Tier::Edge, 0.0, 0.0, 0.0, 0.0, 1.0)],
        };
        t.rows[0].tokens = TokenUsage::new(2000, 1000);
        let p = PricingModel::default_model();
        let c = compute_cost(&t, &p, "gpt-4o-mini").unwrap();
        assert!((c.edge.tokens - (2.0 * 0.00015 + 0.0006)).abs() < 1e-15);
        assert!(matches!(
            compute_cost(&t, &p, "unknown-model"),
            Err(CostError::MissingPrice(_))
        ));
    }

    #[test]
    fn zero_resources_cost_nothing() {
        let t = MetricsTable {
            rows: vec![row(Tier::Cloud, 0.0, 0.0, 0.0, 0.0, 0.0)],
        };
        let c = compute_cost(&t, &PricingModel::default_model(), "x").unwrap();
        assert_eq!(c, CostBreakdown::default());
    }

    #[test]
    fn comparison_percentages() {
        let mut a = CostBreakdown::default();
        a.charge(Tier::Cloud, Category::Compute, 1.0);
        let mut b = CostBreakdown::default();
        b.charge(Tier::Cloud, Category::Compute, 1.402);
        let cmp = tco_compare("a", &a, "b", &b);
        assert!((cmp.total_delta_pct.unwrap() - 40.2).abs() < 1e-9);
        let same = tco_compare("a", &a, "a", &a);
        assert_eq!(same.total_delta_pct, Some(0.0));
        let zero = tco_compare("z", &CostBreakdown::default(), "a", &a);
        assert_eq!(zero.total_delta_pct, None);
        assert_eq!(zero.cells.len(), 10);
    }

    #[test]
    fn rejects_negative_prices() {
        let raw = r#"{"vcpu_per_hour": -1, "ram_gb_per_hour": 0, "storage_gb_per_hour": 0, "network_per_gb": 0}"#;
        assert!(matches!(PricingModel::from_json(raw), Err(CostError::InvalidPrice(_))));
    }
}
