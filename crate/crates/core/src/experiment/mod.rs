//! Reproducible experiment runs: one (backend, profile) cell at a time, or
//! a whole matrix, plus statistics over recorded counts.

pub mod counts;
pub mod matrix;
pub mod report;
pub mod summary;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;

use crate::agents::coordinator::{serve_coordinator, ErrorBody};
use crate::agents::{
    serve_responder, AskRequest, AskResponse, Coordinator, CoordinatorConfig, LoadReport,
    PromptTemplates,
};
use crate::costing::{compute_cost, render_svg, CostBreakdown, PricingModel};
use crate::dataset::{parse_corpus, Corpus};
use crate::evaluation::{classify, AccuracyStats, ConfidenceInterval, DEFAULT_THRESHOLD};
use crate::llm::{
    ChatProvider, CountingProxy, MockProvider, OpenAiCompatibleProvider, RecordingProvider,
    TokenUsage, DEFAULT_MODEL,
};
use crate::memory::{
    serve_memory, BackendKind, ExternalBackend, Extractor, GraphBackend, MemoryBackend,
    VectorBackend, DEFAULT_K,
};
use crate::netproxy::{start_proxy_on, NetworkProfile, ProfileName};
use crate::serve::http_client;
use crate::telemetry::{
    aggregate, components, default_labels, emit_csv, AggregateOptions, AnswerRow,
    ComponentThread, MetricsTable, Phase, PhaseWindow, Probe, RamReduction, Reading, Sampler,
    Tier,
};

pub use counts::CountsFile;
pub use matrix::{run_matrix, MatrixConfig, MatrixOutcome};
pub use summary::{summarize, CellCounts, StatisticalReport};

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("[{stage}] {message}")]
    Stage { stage: &'static str, message: String },
}

impl ExperimentError {
    pub fn at(stage: &'static str, message: impl std::fmt::Display) -> Self {
        Self::Stage {
            stage,
            message: message.to_string(),
        }
    }

    pub fn config(message: impl std::fmt::Display) -> Self {
        Self::at("config", message)
    }

    pub fn stage(&self) -> &'static str {
        match self {
            Self::Stage { stage, .. } => stage,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderKind {
    #[default]
    Mock,
    OpenaiCompatible,
}

impl std::str::FromStr for ProviderKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "mock" => Ok(Self::Mock),
            "openai-compatible" => Ok(Self::OpenaiCompatible),
            _ => Err(format!("unknown provider {s:?}; expected mock or openai-compatible")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderSettings {
    #[serde(default)]
    pub kind: ProviderKind,
    /// Base URL for `openai-compatible`.
    #[serde(default)]
    pub url: Option<String>,
    #[serde(default = "default_model")]
    pub model: String,
}

fn default_model() -> String {
    DEFAULT_MODEL.to_string()
}

impl Default for ProviderSettings {
    fn default() -> Self {
        Self {
            kind: ProviderKind::Mock,
            url: None,
            model: default_model(),
        }
    }
}

/// Where the memory agent's extraction happens.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtractorKind {
    /// Through the chat provider, so extraction tokens are counted.
    #[default]
    Provider,
    /// Rule-based, in-process.
    Deterministic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub backend: BackendKind,
    pub profile: ProfileName,
    /// `None` runs the bundled fixture.
    pub corpus: Option<PathBuf>,
    pub conversation_index: usize,
    pub k: usize,
    pub threshold: f64,
    pub seed: u64,
    pub provider: ProviderSettings,
    pub extractor: ExtractorKind,
    pub pricing: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub sample_interval_ms: u64,
    pub ram: RamReduction,
    pub graph_hops: usize,
    pub chart: bool,
}

impl ExperimentConfig {
    pub fn new(backend: BackendKind, profile: ProfileName, seed: u64, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            backend,
            profile,
            corpus: None,
            conversation_index: 0,
            k: DEFAULT_K,
            threshold: DEFAULT_THRESHOLD,
            seed,
            provider: ProviderSettings::default(),
            extractor: ExtractorKind::default(),
            pricing: None,
            out_dir: out_dir.into(),
            sample_interval_ms: 1000,
            ram: RamReduction::default(),
            graph_hops: 1,
            chart: true,
        }
    }

    /// `<backend>_<profile>_seed<seed>`.
    pub fn run_id(&self) -> String {
        format!("{}_{}_seed{}", self.backend.label(), self.profile, self.seed)
    }

    pub fn run_dir(&self) -> PathBuf {
        self.out_dir.join(self.run_id())
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.k == 0 {
            return Err(ExperimentError::config("k must be at least 1"));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(ExperimentError::config("threshold must lie in (0, 1)"));
        }
        if self.sample_interval_ms == 0 {
            return Err(ExperimentError::config("sample interval must be positive"));
        }
        if self.provider.kind == ProviderKind::OpenaiCompatible && self.provider.url.is_none() {
            return Err(ExperimentError::config("openai-compatible provider needs a URL"));
        }
        for p in self.corpus.iter().chain(&self.pricing) {
            if !p.is_file() {
                return Err(ExperimentError::config(format!("{} does not exist", p.display())));
            }
        }
        Ok(())
    }

    fn load_corpus(&self) -> Result<Corpus, ExperimentError> {
        match &self.corpus {
            None => Ok(crate::dataset::mini_fixture()),
            Some(p) => {
                let raw = std::fs::read_to_string(p)
                    .map_err(|e| ExperimentError::at("corpus", format!("{}: {e}", p.display())))?;
                parse_corpus(&raw).map_err(|e| ExperimentError::at("corpus", e))
            }
        }
    }

    fn load_pricing(&self) -> Result<PricingModel, ExperimentError> {
        match &self.pricing {
            None => Ok(PricingModel::default_model()),
            Some(p) => PricingModel::load(p).map_err(ExperimentError::config),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub loading_ms: f64,
    pub qa_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestError {
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    /// `running`, `complete` or `failed`.
    pub status: String,
    pub config: ExperimentConfig,
    pub endpoints: BTreeMap<String, String>,
    pub started_at: DateTime<Utc>,
    pub finished_at: Option<DateTime<Utc>>,
    pub timings: PhaseTimings,
    /// File names relative to the run directory.
    pub artifacts: Vec<String>,
    pub versions: BTreeMap<String, String>,
    pub error: Option<ManifestError>,
}

impl RunManifest {
    fn new(cfg: &ExperimentConfig) -> Self {
        Self {
            run_id: cfg.run_id(),
            status: "running".into(),
            config: cfg.clone(),
            endpoints: BTreeMap::new(),
            started_at: Utc::now(),
            finished_at: None,
            timings: PhaseTimings::default(),
            artifacts: vec!["manifest.json".into()],
            versions: BTreeMap::from([(
                "memharness".to_string(),
                env!("CARGO_PKG_VERSION").to_string(),
            )]),
            error: None,
        }
    }

    fn add_artifact(&mut self, path: &Path) {
        if let Some(name) = path.file_name().and_then(|n| n.to_str()) {
            if !self.artifacts.iter().any(|a| a == name) {
                self.artifacts.push(name.to_string());
            }
        }
    }

    fn write(&self, dir: &Path) -> Result<(), ExperimentError> {
        write_json(&dir.join("manifest.json"), self)
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ExperimentError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| ExperimentError::at("output", e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| ExperimentError::at("output", format!("{}: {e}", path.display())))
}

/// Loading outcome without wall-clock fields, so it is reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadSummary {
    pub turns_total: u64,
    pub turns_sent: u64,
    pub records_created: u64,
    pub skipped: u64,
    pub failed: u64,
}

impl From<&LoadReport> for LoadSummary {
    fn from(r: &LoadReport) -> Self {
        Self {
            turns_total: r.turns_total,
            turns_sent: r.turns_sent,
            records_created: r.records_created,
            skipped: r.skipped,
            failed: r.failed,
        }
    }
}

/// Two independent token counts that must agree: what the counting proxy
/// saw on the wire and what the clients read from each response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenCheck {
    pub proxy_total: TokenUsage,
    pub responses_total: TokenUsage,
    pub proxy_by_phase: BTreeMap<String, TokenUsage>,
    pub proxy_requests: u64,
    pub unparsed: u64,
    /// Usage the mock model itself reported serving, when it is in use.
    pub served_total: Option<TokenUsage>,
    pub conserved: bool,
}

/// Deterministic summary of one cell; timings and costs live elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellVerdict {
    pub run_id: String,
    pub backend: String,
    pub profile: String,
    pub seed: u64,
    pub threshold: f64,
    pub k: usize,
    pub accuracy: AccuracyStats,
    pub wilson: ConfidenceInterval,
    pub load: LoadSummary,
    pub tokens: TokenCheck,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellCostReport {
    pub run_id: String,
    pub model: String,
    pub breakdown: CostBreakdown,
    pub total_usd: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub verdict: CellVerdict,
    pub metrics: MetricsTable,
    pub costs: CellCostReport,
    pub answers: Vec<AnswerRow>,
}

/// Runs one cell end to end and writes its artifacts under
/// `<out_dir>/<run-id>/`. The manifest is written first and finalized last,
/// also when the run fails.
pub async fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome, ExperimentError> {
    cfg.validate()?;
    let dir = cfg.run_dir();
    std::fs::create_dir_all(&dir).map_err(|e| ExperimentError::at("output", format!("{}: {e}", dir.display())))?;
    let mut manifest = RunManifest::new(cfg);
    manifest.write(&dir)?;
    let res = execute(cfg, &dir, &mut manifest).await;
    manifest.finished_at = Some(Utc::now());
    match res {
        Ok(mut outcome) => {
            manifest.status = "complete".into();
            manifest.write(&dir)?;
            outcome.manifest = manifest;
            Ok(outcome)
        }
        Err(e) => {
            manifest.status = "failed".into();
            manifest.error = Some(ManifestError {
                stage: e.stage().to_string(),
                message: e.to_string(),
            });
            manifest.write(&dir)?;
            Err(e)
        }
    }
}

async fn bind() -> Result<TcpListener, ExperimentError> {
    TcpListener::bind("127.0.0.1:0")
        .await
        .map_err(|e| ExperimentError::at("startup", e))
}

struct Threads {
    coordinator: ComponentThread,
    netproxy: ComponentThread,
    memory: ComponentThread,
    responder: ComponentThread,
    llm_proxy: ComponentThread,
    llm: ComponentThread,
}

impl Threads {
    fn spawn() -> Result<Self, ExperimentError> {
        let t = |name| ComponentThread::spawn(name).map_err(|e| ExperimentError::at("startup", e));
        Ok(Self {
            coordinator: t(components::COORDINATOR)?,
            netproxy: t(components::NETPROXY)?,
            memory: t(components::MEMORY)?,
            responder: t(components::RESPONDER)?,
            llm_proxy: t(components::LLM_PROXY)?,
            llm: t(components::LLM)?,
        })
    }
}

fn provider_for(
    cfg: &ExperimentConfig,
    proxy_url: &str,
    component: &str,
) -> Arc<RecordingProvider<OpenAiCompatibleProvider>> {
    let mut p = OpenAiCompatibleProvider::new(proxy_url)
        .with_component(component)
        .with_seed(cfg.seed);
    if cfg.provider.kind == ProviderKind::OpenaiCompatible {
        p = p.with_api_key_from_env();
    }
    Arc::new(RecordingProvider::new(p))
}

async fn execute(
    cfg: &ExperimentConfig,
    dir: &Path,
    manifest: &mut RunManifest,
) -> Result<RunOutcome, ExperimentError> {
    let corpus = Arc::new(cfg.load_corpus()?);
    let entry = corpus
        .entries
        .get(cfg.conversation_index)
        .ok_or_else(|| ExperimentError::config(format!("corpus has no conversation {}", cfg.conversation_index)))?;
    let qa = entry.qa.clone();
    let pricing = cfg.load_pricing()?;
    let templates = PromptTemplates::default();
    templates.validate().map_err(ExperimentError::config)?;
    let profile = NetworkProfile::named(cfg.profile);

    let threads = Threads::spawn()?;

    // Model endpoint: the mock runs as its own component; a remote endpoint
    // is only reachable through the counting proxy.
    let (llm_url, mock) = match cfg.provider.kind {
        ProviderKind::Mock => {
            let l = bind().await?;
            let seed = cfg.seed;
            let h = threads
                .llm
                .run(async move { MockProvider::new(seed).serve(l).await })
                .await
                .map_err(|e| ExperimentError::at("startup", e))?;
            (h.base_url(), Some(h))
        }
        ProviderKind::OpenaiCompatible => (cfg.provider.url.clone().unwrap_or_default(), None),
    };
    let l = bind().await?;
    let target = llm_url.clone();
    let counting = Arc::new(
        threads
            .llm_proxy
            .run(async move { CountingProxy::start(l, &target).await })
            .await
            .map_err(|e| ExperimentError::at("startup", e))?,
    );

    let memory_llm = provider_for(cfg, &counting.base_url(), components::MEMORY);
    let responder_llm = provider_for(cfg, &counting.base_url(), components::RESPONDER);

    let extractor = match cfg.extractor {
        ExtractorKind::Provider => Extractor::Provider(memory_llm.clone() as Arc<dyn ChatProvider>),
        ExtractorKind::Deterministic => Extractor::Deterministic,
    };
    let backend: Arc<dyn MemoryBackend> = match &cfg.backend {
        BackendKind::Vector => Arc::new(VectorBackend::new(extractor)),
        BackendKind::Graph => Arc::new(GraphBackend::new(extractor).with_hops(cfg.graph_hops)),
        BackendKind::External(url) => {
            let ext = ExternalBackend::new(url);
            ext.health().await.map_err(|e| ExperimentError::at("startup", e))?;
            Arc::new(ext)
        }
    };
    let l = bind().await?;
    let memory_srv = threads
        .memory
        .run(async move { serve_memory(l, backend) })
        .await
        .map_err(|e| ExperimentError::at("startup", e))?;

    let l = bind().await?;
    let rl = responder_llm.clone() as Arc<dyn ChatProvider>;
    let tpl = templates.clone();
    let responder_srv = threads
        .responder
        .run(async move { serve_responder(l, tpl, rl) })
        .await
        .map_err(|e| ExperimentError::at("startup", e))?;

    // Impaired links: coordinator to memory, coordinator to responder.
    let (lm, lr) = (bind().await?, bind().await?);
    let (mem_target, resp_target) = (memory_srv.addr().to_string(), responder_srv.addr().to_string());
    let seed = cfg.seed;
    let (mem_link, resp_link) = threads
        .netproxy
        .run(async move {
            let a = start_proxy_on(lm, &mem_target, profile, seed).await?;
            let b = start_proxy_on(lr, &resp_target, profile, seed.wrapping_add(1)).await?;
            Ok::<_, crate::netproxy::NetProxyError>((a, b))
        })
        .await
        .map_err(|e| ExperimentError::at("startup", e))?;
    let (mem_link, resp_link) = (Arc::new(mem_link), Arc::new(resp_link));

    let mut ccfg = CoordinatorConfig::new(mem_link.base_url(), resp_link.base_url());
    ccfg.k = cfg.k;
    let coordinator = Arc::new(Coordinator::new(ccfg));
    let l = bind().await?;
    let (co, cp) = (coordinator.clone(), corpus.clone());
    let coordinator_srv = threads
        .coordinator
        .run(async move { serve_coordinator(l, co, cp) })
        .await
        .map_err(|e| ExperimentError::at("startup", e))?;

    manifest.endpoints = BTreeMap::from([
        ("coordinator".into(), coordinator_srv.base_url()),
        ("memory".into(), memory_srv.base_url()),
        ("memory_link".into(), mem_link.base_url()),
        ("responder".into(), responder_srv.base_url()),
        ("responder_link".into(), resp_link.base_url()),
        ("llm_proxy".into(), counting.base_url()),
        ("llm".into(), llm_url.clone()),
    ]);
    manifest.write(dir)?;

    let sampler = start_sampler(cfg, &threads, &counting, &mem_link, &resp_link)?;
    let client = http_client(&coordinator_srv.base_url(), Some(Duration::from_secs(6 * 3600)));
    let base = coordinator_srv.base_url();

    // Loading.
    counting.set_phase(Phase::Loading.as_str());
    coordinator.set_phase(Phase::Loading.as_str());
    let t0 = sampler.sample_now();
    let started = Instant::now();
    let load: LoadReport = post_json(
        &client,
        &format!("{base}/load"),
        &serde_json::json!({ "conversation_id": cfg.conversation_index.to_string() }),
        "loading",
    )
    .await?;
    manifest.timings.loading_ms = started.elapsed().as_secs_f64() * 1000.0;
    let t1 = sampler.sample_now();

    // Q&A, one question in flight.
    counting.set_phase(Phase::Qa.as_str());
    coordinator.set_phase(Phase::Qa.as_str());
    let t2 = sampler.sample_now();
    let started = Instant::now();
    let mut answers = Vec::with_capacity(qa.len());
    for (index, item) in qa.iter().enumerate() {
        let req = AskRequest {
            question: item.question.clone(),
            conversation_id: Some(cfg.conversation_index.to_string()),
        };
        let resp: AskResponse = match post_json(&client, &format!("{base}/ask"), &req, "qa").await {
            Ok(r) => r,
            Err(e) => {
                // Keep what was scored so far for debugging.
                let _ = emit_csv(dir, cfg.backend.label(), &cfg.profile.to_string(), &MetricsTable::default(), &answers);
                return Err(ExperimentError::at("qa", format!("question {index}: {e}")));
            }
        };
        let (class, score) = classify(&item.expected_answer, &resp.answer, cfg.threshold);
        answers.push(AnswerRow {
            index,
            category: item.category,
            question: item.question.clone(),
            expected_answer: item.expected_answer.clone(),
            answer: resp.answer,
            string_sim: score.string_sim,
            semantic_sim: score.semantic_sim,
            final_score: score.final_score,
            classification: class,
        });
    }
    manifest.timings.qa_ms = started.elapsed().as_secs_f64() * 1000.0;
    let t3 = sampler.sample_now();
    counting.set_phase("idle");
    coordinator.set_phase("idle");
    let samples = sampler.stop();

    // Aggregation.
    let windows = [
        PhaseWindow { phase: Phase::Loading, start_ms: t0, end_ms: t1 },
        PhaseWindow { phase: Phase::Qa, start_ms: t2, end_ms: t3 },
    ];
    let labels = default_labels();
    let mut table = aggregate(
        &samples,
        &windows,
        &labels,
        &AggregateOptions {
            experiment: cfg.profile.to_string(),
            backend: cfg.backend.label().to_string(),
            ram: cfg.ram,
        },
    )
    .map_err(|e| ExperimentError::at("telemetry", e))?;
    let ledger = counting.ledger();
    let coord_lat = coordinator.latencies();
    for phase in Phase::ALL {
        for (key, usage) in &ledger.usage {
            if key.phase == phase.as_str() {
                let tier = labels
                    .iter()
                    .find(|l| l.component == key.component)
                    .map_or(Tier::Edge, |l| l.tier);
                table.add_tokens(phase, tier, *usage);
            }
        }
        table.set_latency(phase, Tier::Cloud, coord_lat.get(phase.as_str()).map_or(&[], Vec::as_slice));
        table.set_latency(phase, Tier::Edge, ledger.latencies(phase.as_str()));
    }

    // Outputs.
    let files = emit_csv(dir, cfg.backend.label(), &cfg.profile.to_string(), &table, &answers)
        .map_err(|e| ExperimentError::at("output", e))?;
    manifest.add_artifact(&files.metrics);
    manifest.add_artifact(&files.answers);

    let accuracy = AccuracyStats::from_classes(answers.iter().map(|a| a.classification))
        .map_err(|e| ExperimentError::at("scoring", format!("{e} (no questions in conversation)")))?;
    let responses_total = memory_llm.usage() + responder_llm.usage();
    let proxy_total = ledger.total();
    let verdict = CellVerdict {
        run_id: cfg.run_id(),
        backend: cfg.backend.label().to_string(),
        profile: cfg.profile.to_string(),
        seed: cfg.seed,
        threshold: cfg.threshold,
        k: cfg.k,
        accuracy,
        wilson: accuracy.wilson(),
        load: LoadSummary::from(&load),
        tokens: TokenCheck {
            proxy_total,
            responses_total,
            proxy_by_phase: Phase::ALL
                .iter()
                .map(|p| (p.as_str().to_string(), ledger.for_phase(p.as_str())))
                .collect(),
            proxy_requests: ledger.requests,
            unparsed: ledger.unparsed,
            served_total: mock.as_ref().map(|m| m.served_usage()),
            conserved: proxy_total == responses_total && ledger.unparsed == 0,
        },
    };
    let path = dir.join("verdict.json");
    write_json(&path, &verdict)?;
    manifest.add_artifact(&path);

    let breakdown = compute_cost(&table, &pricing, &cfg.provider.model).map_err(|e| ExperimentError::at("costing", e))?;
    let costs = CellCostReport {
        run_id: cfg.run_id(),
        model: cfg.provider.model.clone(),
        breakdown,
        total_usd: breakdown.total(),
    };
    let path = dir.join("costs.json");
    write_json(&path, &costs)?;
    manifest.add_artifact(&path);
    if cfg.chart {
        let path = dir.join("costs.svg");
        std::fs::write(&path, render_svg(&[(&cfg.run_id(), &breakdown)]))
            .map_err(|e| ExperimentError::at("output", e))?;
        manifest.add_artifact(&path);
    }
    let path = dir.join("report.md");
    std::fs::write(&path, report::cell_report(&verdict, &table, &costs, &manifest.timings))
        .map_err(|e| ExperimentError::at("output", e))?;
    manifest.add_artifact(&path);

    drop(coordinator_srv);
    drop(responder_srv);
    drop(memory_srv);
    drop(threads);

    Ok(RunOutcome {
        dir: dir.to_path_buf(),
        manifest: manifest.clone(),
        verdict,
        metrics: table,
        costs,
        answers,
    })
}

async fn post_json<Req: Serialize, Resp: serde::de::DeserializeOwned>(
    client: &reqwest::Client,
    url: &str,
    body: &Req,
    stage: &'static str,
) -> Result<Resp, ExperimentError> {
    let r = client
        .post(url)
        .json(body)
        .send()
        .await
        .map_err(|e| ExperimentError::at(stage, e))?;
    let status = r.status();
    let bytes = r.bytes().await.map_err(|e| ExperimentError::at(stage, e))?;
    if !status.is_success() {
        let msg = serde_json::from_slice::<ErrorBody>(&bytes)
            .map(|b| b.error)
            .unwrap_or_else(|_| String::from_utf8_lossy(&bytes).into_owned());
        return Err(ExperimentError::at(stage, format!("HTTP {status}: {msg}")));
    }
    serde_json::from_slice(&bytes).map_err(|e| ExperimentError::at(stage, e))
}

/// Network bytes per component: the coordinator sees both impaired links,
/// the memory agent and responder their own link plus their model traffic,
/// the proxies both legs of what they forward, the model its own traffic.
fn start_sampler(
    cfg: &ExperimentConfig,
    t: &Threads,
    counting: &Arc<crate::llm::CountingProxyHandle>,
    mem_link: &Arc<crate::netproxy::ProxyHandle>,
    resp_link: &Arc<crate::netproxy::ProxyHandle>,
) -> Result<Sampler, ExperimentError> {
    let mut probes = Vec::new();
    let mut add = |name: &str, meter: crate::telemetry::ThreadMeter, net: Box<dyn Fn() -> u64 + Send + Sync>| {
        probes.push(Probe::new(name, move || Reading {
            cpu_time_ms: meter.cpu_time_ms(),
            ram_bytes: meter.ram_bytes(),
            disk_bytes_written: meter.disk_bytes_written(),
            net_bytes: net(),
        }));
    };
    let (m, r) = (mem_link.clone(), resp_link.clone());
    add(components::COORDINATOR, t.coordinator.meter(), Box::new(move || m.total_bytes() + r.total_bytes()));
    let (m, r) = (mem_link.clone(), resp_link.clone());
    add(components::NETPROXY, t.netproxy.meter(), Box::new(move || 2 * (m.total_bytes() + r.total_bytes())));
    let (m, c) = (mem_link.clone(), counting.clone());
    add(
        components::MEMORY,
        t.memory.meter(),
        Box::new(move || m.total_bytes() + c.ledger().component_bytes(components::MEMORY)),
    );
    let (r, c) = (resp_link.clone(), counting.clone());
    add(
        components::RESPONDER,
        t.responder.meter(),
        Box::new(move || r.total_bytes() + c.ledger().component_bytes(components::RESPONDER)),
    );
    let c = counting.clone();
    add(components::LLM_PROXY, t.llm_proxy.meter(), Box::new(move || 2 * c.ledger().total_bytes()));
    let c = counting.clone();
    add(components::LLM, t.llm.meter(), Box::new(move || c.ledger().total_bytes()));
    Sampler::start(probes, Duration::from_millis(cfg.sample_interval_ms)).map_err(|e| ExperimentError::at("telemetry", e))
}
