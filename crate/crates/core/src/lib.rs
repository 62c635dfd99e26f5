//! Testbed for distributed multi-agent memory: corpus loading, impaired
//! networking, memory backends, telemetry, scoring and cost analysis.

pub mod agents;
pub mod costing;
pub mod dataset;
pub mod evaluation;
pub mod experiment;
pub mod llm;
pub mod memory;
pub mod serve;
pub mod telemetry;
pub mod text;
pub mod netproxy;

// Book chapters compile as doctests so their snippets stay in sync.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/topology.md")]
    mod topology {}
    #[doc = include_str!("../../../book/src/network.md")]
    mod network {}
    #[doc = include_str!("../../../book/src/scoring.md")]
    mod scoring {}
    #[doc = include_str!("../../../book/src/statistics.md")]
    mod statistics {}
    #[doc = include_str!("../../../book/src/costs.md")]
    mod costs {}
    #[doc = include_str!("../../../book/src/running.md")]
    mod running {}
}
