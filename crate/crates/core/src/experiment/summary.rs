//! Cross-cell statistics: accuracy with Wilson intervals, pairwise z-tests,
//! cost comparison and the Pareto verdict.

use serde::{Deserialize, Serialize};

use crate::costing::{tco_compare, CostBreakdown, TcoComparison};
use crate::evaluation::{
    pareto_decision, two_prop_z, AccuracyStats, ConfidenceInterval, ParetoVerdict, StatsError,
    SystemOutcome,
};

/// Answer counts for one (system, experiment) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellCounts {
    pub name: String,
    pub system: String,
    pub experiment: String,
    pub correct: u64,
    pub wrong: u64,
    pub idk: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub name: String,
    pub system: String,
    pub experiment: String,
    pub accuracy: AccuracyStats,
    pub wilson: ConfidenceInterval,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<CellCost>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellCost {
    pub breakdown: CostBreakdown,
    pub total_usd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a: String,
    pub b: String,
    pub z: f64,
    pub p_value: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentVerdict {
    pub experiment: String,
    pub a: String,
    pub b: String,
    /// Cost comparison with the cheaper system as the base (`tco.a`).
    pub tco: TcoComparison,
    pub pareto: ParetoVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatisticalReport {
    pub alpha: f64,
    pub cells: Vec<CellStats>,
    /// Empty for a single cell.
    pub comparisons: Vec<Comparison>,
    pub verdicts: Vec<ExperimentVerdict>,
    /// The system every per-experiment verdict names, if they agree.
    pub overall_dominant: Option<String>,
}

/// Pairs differing in exactly one factor: first the systems within each
/// experiment, then the experiments within each system. Order follows first
/// appearance in `cells`.
pub fn default_comparisons(cells: &[CellCounts]) -> Vec<(usize, usize)> {
    let mut experiments: Vec<&str> = Vec::new();
    let mut systems: Vec<&str> = Vec::new();
    for c in cells {
        if !experiments.contains(&c.experiment.as_str()) {
            experiments.push(&c.experiment);
        }
        if !systems.contains(&c.system.as_str()) {
            systems.push(&c.system);
        }
    }
    let mut pairs = Vec::new();
    let mut push_within = |key: &dyn Fn(&CellCounts) -> bool| {
        let idx: Vec<usize> = (0..cells.len()).filter(|&i| key(&cells[i])).collect();
        for (x, &i) in idx.iter().enumerate() {
            for &j in &idx[x + 1..] {
                pairs.push((i, j));
            }
        }
    };
    for e in &experiments {
        push_within(&|c: &CellCounts| c.experiment == *e);
    }
    for s in &systems {
        push_within(&|c: &CellCounts| c.system == *s);
    }
    pairs
}

/// Builds the report. `costs[i]` is cell `i`'s cost when known; Pareto
/// verdicts need both systems of an experiment to have one.
pub fn summarize(
    cells: &[CellCounts],
    costs: &[Option<CostBreakdown>],
    alpha: f64,
) -> Result<StatisticalReport, StatsError> {
    let mut stats = Vec::with_capacity(cells.len());
    for (i, c) in cells.iter().enumerate() {
        let accuracy = AccuracyStats::from_counts(c.correct, c.wrong, c.idk)?;
        stats.push(CellStats {
            name: c.name.clone(),
            system: c.system.clone(),
            experiment: c.experiment.clone(),
            accuracy,
            wilson: accuracy.wilson(),
            cost: costs.get(i).copied().flatten().map(|b| CellCost {
                breakdown: b,
                total_usd: b.total(),
            }),
        });
    }
    if cells.len() < 2 {
        return Ok(StatisticalReport {
            alpha,
            cells: stats,
            comparisons: Vec::new(),
            verdicts: Vec::new(),
            overall_dominant: None,
        });
    }

    let mut comparisons = Vec::new();
    let mut verdicts = Vec::new();
    for (i, j) in default_comparisons(cells) {
        let (a, b) = (&stats[i], &stats[j]);
        let t = two_prop_z(a.accuracy.correct, a.accuracy.n, b.accuracy.correct, b.accuracy.n)?;
        comparisons.push(Comparison {
            a: a.name.clone(),
            b: b.name.clone(),
            z: t.z,
            p_value: t.p,
            significant: t.p < alpha,
        });
        if a.experiment != b.experiment {
            continue;
        }
        let (Some(ca), Some(cb)) = (&a.cost, &b.cost) else {
            continue;
        };
        let outcome = |s: &CellStats, cost: f64| SystemOutcome {
            name: s.system.clone(),
            cost_usd: cost,
            correct: s.accuracy.correct,
            n: s.accuracy.n,
        };
        let pareto = pareto_decision(&outcome(a, ca.total_usd), &outcome(b, cb.total_usd), alpha)?;
        // Express the cost gap relative to the cheaper system.
        let tco = if ca.total_usd <= cb.total_usd {
            tco_compare(&a.system, &ca.breakdown, &b.system, &cb.breakdown)
        } else {
            tco_compare(&b.system, &cb.breakdown, &a.system, &ca.breakdown)
        };
        verdicts.push(ExperimentVerdict {
            experiment: a.experiment.clone(),
            a: a.system.clone(),
            b: b.system.clone(),
            tco,
            pareto,
        });
    }
    let overall_dominant = verdicts
        .first()
        .and_then(|v| v.pareto.dominant.clone())
        .filter(|d| verdicts.iter().all(|v| v.pareto.dominant.as_ref() == Some(d)));
    Ok(StatisticalReport {
        alpha,
        cells: stats,
        comparisons,
        verdicts,
        overall_dominant,
    })
}

/// Wilson interval at the conventional 95% level, rounded for display.
pub fn ci_3dp(ci: &ConfidenceInterval) -> (f64, f64) {
    let r = |x: f64| (x * 1000.0).round() / 1000.0;
    (r(ci.low), r(ci.high))
}
