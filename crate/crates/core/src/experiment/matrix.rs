//! Several cells run back to back, then compared.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::report::stats_report;
use super::summary::{summarize, CellCounts, StatisticalReport};
use super::{
    run_experiment, write_json, ExperimentConfig, ExperimentError, ExtractorKind, ProviderSettings,
};
use crate::costing::render_svg;
use crate::evaluation::{DEFAULT_ALPHA, DEFAULT_THRESHOLD};
use crate::memory::{BackendKind, DEFAULT_K};
use crate::netproxy::ProfileName;
use crate::telemetry::RamReduction;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixCell {
    /// `vector`, `graph` or `external=<url>`.
    pub backend: String,
    pub profile: ProfileName,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixConfig {
    pub cells: Vec<MatrixCell>,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub corpus: Option<PathBuf>,
    #[serde(default)]
    pub conversation_index: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub provider: ProviderSettings,
    #[serde(default)]
    pub extractor: ExtractorKind,
    #[serde(default)]
    pub pricing: Option<PathBuf>,
    #[serde(default = "default_interval")]
    pub sample_interval_ms: u64,
    #[serde(default)]
    pub ram: RamReduction,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}
fn default_k() -> usize {
    DEFAULT_K
}
fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}
fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}
fn default_interval() -> u64 {
    1000
}

impl MatrixConfig {
    /// Reads a config file. Relative paths inside it are taken relative to
    /// the file's own directory.
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| ExperimentError::config(format!("{}: {e}", path.display())))?;
        let mut cfg: MatrixConfig = serde_json::from_str(&raw)
            .map_err(|e| ExperimentError::config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        rebase(&mut cfg.out_dir);
        cfg.corpus.as_mut().map(rebase);
        cfg.pricing.as_mut().map(rebase);
        Ok(cfg)
    }

    pub fn experiments(&self) -> Result<Vec<ExperimentConfig>, ExperimentError> {
        if self.cells.is_empty() {
            return Err(ExperimentError::config("matrix has no cells"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(ExperimentError::config("alpha must lie in (0, 1)"));
        }
        self.cells
            .iter()
            .map(|c| {
                let backend: BackendKind = c.backend.parse().map_err(ExperimentError::config)?;
                let mut e = ExperimentConfig::new(backend, c.profile, self.seed, &self.out_dir);
                e.corpus = self.corpus.clone();
                e.conversation_index = self.conversation_index;
                e.k = self.k;
                e.threshold = self.threshold;
                e.provider = self.provider.clone();
                e.extractor = self.extractor;
                e.pricing = self.pricing.clone();
                e.sample_interval_ms = self.sample_interval_ms;
                e.ram = self.ram;
                e.validate()?;
                Ok(e)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStatus {
    pub run_id: String,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixOutcome {
    pub runs: Vec<CellStatus>,
    /// Statistics over the cells that completed.
    pub report: StatisticalReport,
}

/// Runs every cell in order. A failed cell is recorded and skipped; the
/// comparison covers whatever completed.
pub async fn run_matrix(cfg: &MatrixConfig) -> Result<MatrixOutcome, ExperimentError> {
    let experiments = cfg.experiments()?;
    let mut runs = Vec::new();
    let mut counts = Vec::new();
    let mut costs = Vec::new();
    for e in &experiments {
        tracing::info!(run_id = %e.run_id(), "starting cell");
        match run_experiment(e).await {
            Ok(o) => {
                let a = o.verdict.accuracy;
                counts.push(CellCounts {
                    name: o.verdict.run_id.clone(),
                    system: o.verdict.backend.clone(),
                    experiment: o.verdict.profile.clone(),
                    correct: a.correct,
                    wrong: a.wrong,
                    idk: a.idk,
                });
                costs.push(Some(o.costs.breakdown));
                runs.push(CellStatus { run_id: e.run_id(), ok: true, error: None });
            }
            Err(err) => {
                tracing::error!(run_id = %e.run_id(), "cell failed: {err}");
                runs.push(CellStatus { run_id: e.run_id(), ok: false, error: Some(err.to_string()) });
            }
        }
    }
    if counts.is_empty() {
        return Err(ExperimentError::at("matrix", "no cell completed"));
    }
    let report = summarize(&counts, &costs, cfg.alpha).map_err(|e| ExperimentError::at("statistics", e))?;
    let outcome = MatrixOutcome { runs, report };

    let dir = cfg.out_dir.join("matrix");
    std::fs::create_dir_all(&dir).map_err(|e| ExperimentError::at("output", e))?;
    write_json(&dir.join("verdict.json"), &outcome)?;
    let mut md = String::from("# Matrix\n\n| Run | Status |\n|---|---|\n");
    for r in &outcome.runs {
        md.push_str(&format!(
            "| {} | {} |\n",
            r.run_id,
            r.error.as_deref().map_or("ok".to_string(), |e| format!("failed: {e}"))
        ));
    }
    md.push('\n');
    md.push_str(&stats_report(&outcome.report));
    std::fs::write(dir.join("report.md"), md).map_err(|e| ExperimentError::at("output", e))?;
    let series: Vec<(&str, &crate::costing::CostBreakdown)> = outcome
        .report
        .cells
        .iter()
        .filter_map(|c| c.cost.as_ref().map(|k| (c.name.as_str(), &k.breakdown)))
        .collect();
    std::fs::write(dir.join("costs.svg"), render_svg(&series)).map_err(|e| ExperimentError::at("output", e))?;
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_rebasing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        std::fs::write(
            &path,
            r#"{"cells":[{"backend":"graph","profile":"constrained"},{"backend":"vector","profile":"constrained"}],"seed":3}"#,
        )
        .unwrap();
        let cfg = MatrixConfig::load(&path).unwrap();
        assert_eq!(cfg.out_dir, dir.path().join("out"));
        let ex = cfg.experiments().unwrap();
        assert_eq!(ex[0].run_id(), "graph_constrained_seed3");
        assert_eq!(ex[1].k, DEFAULT_K);
    }

    #[test]
    fn shipped_config_is_valid() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../config/matrix.json");
        let cfg = MatrixConfig::load(&path).unwrap();
        let ex = cfg.experiments().unwrap();
        assert_eq!(ex.len(), 4);
        assert!(ex.iter().all(|e| e.pricing.as_ref().is_some_and(|p| p.is_file())));
    }

    #[test]
    fn bad_backend_is_a_config_error() {
        let cfg: MatrixConfig =
            serde_json::from_str(r#"{"cells":[{"backend":"nosuch","profile":"constrained"}]}"#).unwrap();
        let err = cfg.experiments().unwrap_err();
        assert_eq!(err.stage(), "config");
    }
}
