//! Recorded answer counts, optionally with resource tables, fed straight
//! into the statistics kernel.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::summary::{summarize, CellCounts, StatisticalReport};
use super::ExperimentError;
use crate::costing::{compute_cost, Category, CostBreakdown, PricingModel};
use crate::evaluation::DEFAULT_ALPHA;
use crate::llm::TokenUsage;
use crate::telemetry::{LatencyStats, MetricsRow, MetricsTable, Phase, Tier};

/// Measured resources of one (phase, tier) slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceRow {
    pub phase: Phase,
    pub tier: Tier,
    pub cpu_minutes: f64,
    pub ram_mb: f64,
    pub disk_mb: f64,
    pub network_mb: f64,
    pub duration_minutes: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountsCell {
    pub name: String,
    pub system: String,
    pub experiment: String,
    pub correct: u64,
    pub wrong: u64,
    pub idk: u64,
    /// Optional cross-check of `correct + wrong + idk`.
    #[serde(default)]
    pub n: Option<u64>,
    #[serde(default)]
    pub resources: Vec<ResourceRow>,
    /// Token spend per phase, already in USD.
    #[serde(default)]
    pub token_cost_usd: BTreeMap<Phase, f64>,
    /// Overrides everything above when set.
    #[serde(default)]
    pub cost_usd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountsFile {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Tier that token spend is booked against.
    #[serde(default = "default_token_tier")]
    pub token_tier: Tier,
    pub cells: Vec<CountsCell>,
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

fn default_token_tier() -> Tier {
    Tier::Edge
}

impl CountsFile {
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| ExperimentError::config(format!("{}: {e}", path.display())))?;
        let f: CountsFile = serde_json::from_str(&raw)
            .map_err(|e| ExperimentError::config(format!("{}: {e}", path.display())))?;
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.cells.is_empty() {
            return Err(ExperimentError::config("counts file has no cells"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(ExperimentError::config("alpha must lie in (0, 1)"));
        }
        for c in &self.cells {
            let sum = c.correct + c.wrong + c.idk;
            if sum == 0 {
                return Err(ExperimentError::config(format!("cell {} has no answers", c.name)));
            }
            if let Some(n) = c.n {
                if n != sum {
                    return Err(ExperimentError::config(format!(
                        "cell {}: correct + wrong + idk = {sum}, but n = {n}",
                        c.name
                    )));
                }
            }
        }
        Ok(())
    }

    /// Cost of each cell, or `None` when it carries no cost data.
    pub fn costs(&self, pricing: &PricingModel) -> Result<Vec<Option<CostBreakdown>>, ExperimentError> {
        self.cells
            .iter()
            .map(|c| {
                if let Some(usd) = c.cost_usd {
                    let mut b = CostBreakdown::default();
                    b.charge(self.token_tier, Category::Tokens, usd);
                    return Ok(Some(b));
                }
                if c.resources.is_empty() && c.token_cost_usd.is_empty() {
                    return Ok(None);
                }
                let table = MetricsTable {
                    rows: c.resources.iter().map(|r| to_row(c, r)).collect(),
                };
                // Token spend arrives in USD, so no model price is consulted.
                let mut b = compute_cost(&table, pricing, "")
                    .map_err(|e| ExperimentError::config(e.to_string()))?;
                for usd in c.token_cost_usd.values() {
                    b.charge(self.token_tier, Category::Tokens, *usd);
                }
                Ok(Some(b))
            })
            .collect()
    }

    pub fn report(&self, pricing: &PricingModel) -> Result<StatisticalReport, ExperimentError> {
        let counts: Vec<CellCounts> = self
            .cells
            .iter()
            .map(|c| CellCounts {
                name: c.name.clone(),
                system: c.system.clone(),
                experiment: c.experiment.clone(),
                correct: c.correct,
                wrong: c.wrong,
                idk: c.idk,
            })
            .collect();
        let costs = self.costs(pricing)?;
        summarize(&counts, &costs, self.alpha).map_err(|e| ExperimentError::config(e.to_string()))
    }
}

fn to_row(c: &CountsCell, r: &ResourceRow) -> MetricsRow {
    MetricsRow {
        experiment: c.experiment.clone(),
        phase: r.phase,
        backend: c.system.clone(),
        tier: r.tier,
        cpu_minutes: r.cpu_minutes,
        ram_mb: r.ram_mb,
        disk_mb: r.disk_mb,
        network_mb: r.network_mb,
        duration_minutes: r.duration_minutes,
        tokens: TokenUsage::default(),
        latency: LatencyStats::default(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn file(cells: &str) -> CountsFile {
        serde_json::from_str(&format!(r#"{{"cells": {cells}}}"#)).unwrap()
    }

    #[test]
    fn minimal_file() {
        let f = file(r#"[{"name":"a","system":"x","experiment":"e","correct":1,"wrong":2,"idk":3}]"#);
        assert_eq!(f.alpha, 0.05);
        assert_eq!(f.token_tier, Tier::Edge);
        f.validate().unwrap();
        assert_eq!(f.costs(&PricingModel::default_model()).unwrap(), vec![None]);
    }

    #[test]
    fn n_must_match() {
        let f = file(r#"[{"name":"a","system":"x","experiment":"e","correct":1,"wrong":2,"idk":3,"n":7}]"#);
        assert!(f.validate().is_err());
    }

    #[test]
    fn resources_and_token_spend_add_up() {
        let f = file(
            r#"[{"name":"a","system":"x","experiment":"e","correct":1,"wrong":0,"idk":0,
                "resources":[{"phase":"loading","tier":"cloud","cpu_minutes":60,"ram_mb":0,"disk_mb":0,"network_mb":1024,"duration_minutes":60}],
                "token_cost_usd":{"loading":0.5,"qa":0.25}}]"#,
        );
        let b = f.costs(&PricingModel::default_model()).unwrap()[0].unwrap();
        assert!((b.cloud.compute - 0.04048).abs() < 1e-12);
        assert!((b.cloud.network - 0.09).abs() < 1e-12);
        assert_eq!(b.edge.tokens, 0.75);
    }
}
