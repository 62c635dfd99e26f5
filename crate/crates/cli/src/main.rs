use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use memharness_core::costing::PricingModel;
use memharness_core::experiment::report::stats_report;
use memharness_core::experiment::{
    run_experiment, run_matrix, CountsFile, ExperimentConfig, ExtractorKind, MatrixConfig,
    ProviderKind, ProviderSettings,
};
use memharness_core::llm::{MockProvider, DEFAULT_MODEL};
use memharness_core::memory::BackendKind;
use memharness_core::netproxy::{start_proxy, Direction, NetworkProfile, ProfileName, ToxicConfig};
use memharness_core::telemetry::alloc::TaggedAlloc;
use memharness_core::telemetry::RamReduction;
use tokio::net::TcpListener;

#[global_allocator]
static ALLOC: TaggedAlloc = TaggedAlloc;

#[derive(Parser)]
#[command(name = "memharness", version, about = "Memory backends for multi-agent systems, measured under impaired networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one (backend, profile) cell end to end.
    Run(RunArgs),
    /// Run every cell listed in a JSON config, then compare them.
    Matrix {
        #[arg(long)]
        config: PathBuf,
    },
    /// Statistics and verdicts from recorded answer counts.
    Stats {
        #[arg(long)]
        counts_file: PathBuf,
        /// Pricing JSON; the bundled prices by default.
        #[arg(long)]
        pricing: Option<PathBuf>,
        /// Print the report as JSON instead of markdown.
        #[arg(long)]
        json: bool,
    },
    /// Standalone impairing TCP proxy.
    Proxy(ProxyArgs),
    /// Serve the deterministic mock model over the chat completions API.
    MockLlm {
        #[arg(long, default_value = "127.0.0.1:8089")]
        listen: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Vector,
    Graph,
    External,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProviderArg {
    Mock,
    OpenaiCompatible,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExtractorArg {
    Provider,
    Deterministic,
}

#[derive(Clone, Copy, ValueEnum)]
enum RamArg {
    Peak,
    Mean,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_enum)]
    backend: BackendArg,
    /// Base URL of the external memory service (`--backend external`).
    #[arg(long)]
    memory_url: Option<String>,
    #[arg(long)]
    profile: ProfileName,
    /// LoCoMo-layout JSON; the bundled fixture when omitted.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    conversation: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value_t = memharness_core::memory::DEFAULT_K)]
    k: usize,
    #[arg(long, default_value_t = memharness_core::evaluation::DEFAULT_THRESHOLD)]
    threshold: f64,
    #[arg(long, value_enum, default_value_t = ProviderArg::Mock)]
    provider: ProviderArg,
    /// Chat completions base URL for `openai-compatible`. The API key is
    /// read from MEMHARNESS_API_KEY.
    #[arg(long)]
    provider_url: Option<String>,
    #[arg(long, default_value = DEFAULT_MODEL)]
    model: String,
    #[arg(long, value_enum, default_value_t = ExtractorArg::Provider)]
    extractor: ExtractorArg,
    #[arg(long)]
    pricing: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    sample_interval_ms: u64,
    #[arg(long, value_enum, default_value_t = RamArg::Peak)]
    ram: RamArg,
    #[arg(long, default_value_t = 1)]
    graph_hops: usize,
    /// Skip costs.svg.
    #[arg(long)]
    no_chart: bool,
}

#[derive(Args)]
struct ProxyArgs {
    #[arg(long)]
    listen: String,
    #[arg(long)]
    target: String,
    #[arg(long, default_value_t = 0)]
    latency_ms: u64,
    #[arg(long, default_value_t = 0)]
    jitter_ms: u64,
    /// Bytes per second; unlimited when omitted.
    #[arg(long)]
    bandwidth_bps: Option<u64>,
    /// Where `GET /stats` and `GET /metrics` are served.
    #[arg(long, default_value = "127.0.0.1:0")]
    admin: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl RunArgs {
    fn into_config(self) -> Result<ExperimentConfig> {
        let backend = match (self.backend, self.memory_url) {
            (BackendArg::Vector, _) => BackendKind::Vector,
            (BackendArg::Graph, _) => BackendKind::Graph,
            (BackendArg::External, Some(url)) => format!("external={url}")
                .parse()
                .map_err(anyhow::Error::msg)?,
            (BackendArg::External, None) => bail!("--backend external needs --memory-url"),
        };
        let mut c = ExperimentConfig::new(backend, self.profile, self.seed, self.out);
        c.corpus = self.corpus;
        c.conversation_index = self.conversation;
        c.k = self.k;
        c.threshold = self.threshold;
        c.provider = ProviderSettings {
            kind: match self.provider {
                ProviderArg::Mock => ProviderKind::Mock,
                ProviderArg::OpenaiCompatible => ProviderKind::OpenaiCompatible,
            },
            url: self.provider_url,
            model: self.model,
        };
        c.extractor = match self.extractor {
            ExtractorArg::Provider => ExtractorKind::Provider,
            ExtractorArg::Deterministic => ExtractorKind::Deterministic,
        };
        c.pricing = self.pricing;
        c.sample_interval_ms = self.sample_interval_ms;
        c.ram = match self.ram {
            RamArg::Peak => RamReduction::Peak,
            RamArg::Mean => RamReduction::Mean,
        };
        c.graph_hops = self.graph_hops;
        c.chart = !self.no_chart;
        Ok(c)
    }
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match dispatch(Cli::parse().command).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

async fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Run(args) => {
            let cfg = args.into_config()?;
            let out = run_experiment(&cfg).await?;
            let a = out.verdict.accuracy;
            println!(
                "{}: {} correct, {} wrong, {} idk of {}; {:.4} USD; artifacts in {}",
                out.verdict.run_id,
                a.correct,
                a.wrong,
                a.idk,
                a.n,
                out.costs.total_usd,
                out.dir.display()
            );
        }
        Command::Matrix { config } => {
            let cfg = MatrixConfig::load(&config)?;
            let out = run_matrix(&cfg).await?;
            print!("{}", stats_report(&out.report));
            let failed: Vec<_> = out.runs.iter().filter(|r| !r.ok).collect();
            if !failed.is_empty() {
                bail!("{} of {} cells failed; matrix incomplete", failed.len(), out.runs.len());
            }
        }
        Command::Stats { counts_file, pricing, json } => {
            let counts = CountsFile::load(&counts_file)?;
            let pricing = match pricing {
                Some(p) => PricingModel::load(&p).with_context(|| format!("{}", p.display()))?,
                None => PricingModel::default_model(),
            };
            let report = counts.report(&pricing)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print!("{}", stats_report(&report));
            }
        }
        Command::Proxy(a) => {
            let toxic = ToxicConfig {
                latency_ms: a.latency_ms,
                jitter_ms: a.jitter_ms,
                bandwidth_bytes_per_s: a.bandwidth_bps,
                direction: Direction::Both,
            };
            let name = if toxic.is_passthrough() {
                ProfileName::Unconstrained
            } else {
                ProfileName::Constrained
            };
            let proxy = start_proxy(&a.listen, &a.target, NetworkProfile { name, toxic }, a.seed).await?;
            let admin = proxy.serve_admin(
                TcpListener::bind(&a.admin).await.with_context(|| format!("binding admin {}", a.admin))?,
            )?;
            println!("proxy {} -> {}", proxy.addr(), a.target);
            println!("admin {}/stats", admin.base_url());
            tokio::signal::ctrl_c().await?;
            proxy.shutdown();
        }
        Command::MockLlm { listen, seed } => {
            let l = TcpListener::bind(&listen).await.with_context(|| format!("binding {listen}"))?;
            let h = MockProvider::new(seed).serve(l).await?;
            println!("mock model at {}/v1/chat/completions", h.base_url());
            tokio::signal::ctrl_c().await?;
        }
    }
    Ok(())
}
