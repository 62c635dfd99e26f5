//! Statistical Pareto dominance between two systems.
//!
//! System A dominates B when A is strictly cheaper and B's accuracy is not
//! significantly better. When the accuracy difference is significant the
//! cheaper system still dominates if it is also the more accurate one;
//! otherwise the pair is a genuine cost/accuracy trade-off.

use serde::{Deserialize, Serialize};

use super::stats::{two_prop_z, StatsError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemOutcome {
    pub name: String,
    pub cost_usd: f64,
    pub correct: u64,
    pub n: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rationale {
    FinancialDominance,
    StatisticalEquivalence,
    AccuracyDominance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoVerdict {
    pub dominant: Option<String>,
    pub rationale: Vec<Rationale>,
    pub z: f64,
    pub p_value: f64,
    pub alpha: f64,
}

impl ParetoVerdict {
    pub fn summary(&self) -> String {
        match &self.dominant {
            Some(name) => format!("{name} dominant"),
            None => "no dominant system".to_string(),
        }
    }
}

pub fn pareto_decision(
    a: &SystemOutcome,
    b: &SystemOutcome,
    alpha: f64,
) -> Result<ParetoVerdict, StatsError> {
    let t = two_prop_z(a.correct, a.n, b.correct, b.n)?;
    let equivalent = t.p >= alpha;
    let (cheaper, other) = if a.cost_usd < b.cost_usd {
        (Some(a), b)
    } else if b.cost_usd < a.cost_usd {
        (Some(b), a)
    } else {
        (None, a)
    };

    let mut rationale = Vec::new();
    let dominant = cheaper.and_then(|c| {
        rationale.push(Rationale::FinancialDominance);
        if equivalent {
            rationale.push(Rationale::StatisticalEquivalence);
            return Some(c.name.clone());
        }
        let c_rate = c.correct as f64 / c.n as f64;
        let o_rate = other.correct as f64 / other.n as f64;
        if c_rate > o_rate {
            rationale.push(Rationale::AccuracyDominance);
            Some(c.name.clone())
        } else {
            None
        }
    });
    if cheaper.is_none() && equivalent {
        rationale.push(Rationale::StatisticalEquivalence);
    }
    Ok(ParetoVerdict {
        dominant,
        rationale,
        z: t.z,
        p_value: t.p,
        alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sys(name: &str, cost: f64, correct: u64, n: u64) -> SystemOutcome {
        SystemOutcome {
            name: name.into(),
            cost_usd: cost,
            correct,
            n,
        }
    }

    #[test]
    fn cheaper_and_equivalent_dominates() {
        let v = pareto_decision(&sys("vector", 1.0, 15, 199), &sys("graph", 1.4, 22, 199), 0.05).unwrap();
        assert_eq!(v.dominant.as_deref(), Some("vector"));
        assert_eq!(
            v.rationale,
            [Rationale::FinancialDominance, Rationale::StatisticalEquivalence]
        );
        assert!((v.p_value - 0.2269).abs() < 1e-4);
        assert_eq!(v.summary(), "vector dominant");
    }

    #[test]
    fn equal_costs_have_no_winner() {
        let v = pareto_decision(&sys("a", 2.0, 15, 199), &sys("b", 2.0, 22, 199), 0.05).unwrap();
        assert_eq!(v.dominant, None);
        assert_eq!(v.rationale, [Rationale::StatisticalEquivalence]);
    }

    #[test]
    fn significant_difference_against_the_cheaper_is_a_trade_off() {
        let v = pareto_decision(&sys("a", 1.0, 10, 100), &sys("b", 5.0, 30, 100), 0.05).unwrap();
        assert!(v.p_value < 0.01);
        assert_eq!(v.dominant, None);
        assert_eq!(v.rationale, [Rationale::FinancialDominance]);
    }

    #[test]
    fn cheaper_and_significantly_better_dominates() {
        let v = pareto_decision(&sys("a", 5.0, 10, 100), &sys("b", 1.0, 30, 100), 0.05).unwrap();
        assert_eq!(v.dominant.as_deref(), Some("b"));
        assert_eq!(v.rationale, [Rationale::FinancialDominance, Rationale::AccuracyDominance]);
    }
}
