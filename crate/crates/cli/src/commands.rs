use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use oasis_core::estimators::alpha_from_beta;
use oasis_core::harness::diagnostics::write_kl_series;
use oasis_core::harness::experiment::ERROR_TARGET;
use oasis_core::harness::{
    generate_synthetic_pool, kl_to_optimal, run_experiment, subsample_pool, ExperimentReport, ExperimentSpec,
    ScoreModel, SyntheticSpec,
};
use oasis_core::pool::save_pool;
use oasis_core::sampler::{read_trace, write_trace, StratificationMethod};
use oasis_core::service::SessionManager;
use oasis_core::{load_pool, run, OracleKind, Pool, PoolFormat, SamplerConfig, Strategy};

#[derive(Debug, Parser)]
#[command(name = "oasis", version, about = "Estimate a matcher's F-measure from a small number of labels")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic pool with known ground truth.
    Generate(GenerateArgs),
    /// Draw a uniform subsample of a pool.
    Subsample(SubsampleArgs),
    /// Run one sampler on a pool and report its estimate.
    Sample(SampleArgs),
    /// Run a replicated experiment from a spec file and/or settings.
    Run(RunArgs),
    /// Replay an OASIS trace and write the KL divergence to the optimal
    /// stratum distribution after every label.
    Diagnose(DiagnoseArgs),
    /// Serve labelling sessions over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct PoolArgs {
    /// Pool file with pair_id, score, predicted_label and optional
    /// true_label / true_match_prob columns.
    #[arg(long)]
    pub pool: PathBuf,
    #[arg(long, default_value_t = ',')]
    pub delimiter: char,
    /// Declare whether scores are probabilities instead of inferring it.
    #[arg(long)]
    pub scores_are_probabilities: Option<bool>,
}

impl PoolArgs {
    fn format(&self) -> anyhow::Result<PoolFormat> {
        if !self.delimiter.is_ascii() {
            bail!("delimiter must be a single ASCII character");
        }
        Ok(PoolFormat {
            delimiter: self.delimiter as u8,
            scores_are_probabilities: self.scores_are_probabilities,
        })
    }

    fn load(&self) -> anyhow::Result<Pool> {
        let pool = load_pool(&self.pool, &self.format()?)?;
        Ok(pool)
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StratificationArg {
    Csf,
    EqualSize,
}

#[derive(Debug, Default, Args)]
pub struct SamplerArgs {
    #[arg(long)]
    pub strategy: Option<Strategy>,
    /// F-measure weight: 1 is precision, 0 is recall.
    #[arg(long, conflicts_with = "beta")]
    pub alpha: Option<f64>,
    /// F-beta parameter; sets alpha = 1 / (1 + beta^2).
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Prior strength; defaults to twice the number of strata.
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Stop once this many distinct pairs are labelled.
    #[arg(long)]
    pub label_budget: Option<usize>,
    #[arg(long)]
    pub strata: Option<usize>,
    #[arg(long)]
    pub bins: Option<usize>,
    #[arg(long, value_enum)]
    pub stratification: Option<StratificationArg>,
    /// Threshold for mapping raw scores to probabilities.
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub prior_decay: bool,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl SamplerArgs {
    pub fn config(&self) -> SamplerConfig {
        let mut c = SamplerConfig::default();
        if let Some(s) = self.strategy {
            c.strategy = s;
        }
        if let Some(a) = self.alpha {
            c.alpha = a;
        }
        if let Some(b) = self.beta {
            c.alpha = alpha_from_beta(b);
        }
        if let Some(e) = self.epsilon {
            c.epsilon = e;
        }
        c.eta = self.eta;
        if let Some(t) = self.iterations {
            c.iterations = t;
        }
        c.label_budget = self.label_budget;
        if let Some(k) = self.strata {
            c.desired_strata = k;
        }
        if let Some(m) = self.bins {
            c.histogram_bins = m;
        }
        if let Some(m) = self.stratification {
            c.stratification = match m {
                StratificationArg::Csf => StratificationMethod::Csf,
                StratificationArg::EqualSize => StratificationMethod::EqualSize,
            };
        }
        c.tau = self.tau;
        c.prior_decay = self.prior_decay;
        if let Some(s) = self.seed {
            c.seed = s;
        }
        c
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 20_000)]
    pub n: usize,
    #[arg(long, default_value_t = 100)]
    pub matches: usize,
    /// `calibrated` writes probabilities, `raw` writes logit-scale margins.
    #[arg(long, default_value = "calibrated")]
    pub score_model: ScoreModel,
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    #[arg(long, default_value_t = 1.0)]
    pub concentration: f64,
    #[arg(long, default_value_t = 0.25)]
    pub raw_scale: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct SubsampleArgs {
    #[command(flatten)]
    pub pool: PoolArgs,
    #[arg(long)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OracleArg {
    /// Use the true_label column.
    Deterministic,
    /// Draw labels from true_match_prob.
    Noisy,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub pool: PoolArgs,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    #[arg(long, value_enum, default_value = "deterministic")]
    pub oracle: OracleArg,
    #[arg(long, default_value_t = 0)]
    pub oracle_seed: u64,
    /// Write the per-iteration trace here.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Flat `key = value` spec file.
    pub spec: Option<PathBuf>,
    /// Extra `key=value` settings applied after the spec file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub settings: Vec<String>,
    #[arg(long)]
    pub pool: Option<PathBuf>,
    /// Comma-separated strategies.
    #[arg(long)]
    pub strategies: Option<String>,
    #[arg(long)]
    pub replications: Option<usize>,
    #[arg(long)]
    pub seed_base: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub pool: PoolArgs,
    /// Sampler settings of the run that produced the trace.
    #[command(flatten)]
    pub sampler: SamplerArgs,
    #[arg(long)]
    pub trace: PathBuf,
    /// Defaults to standard output.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    /// Require `Authorization: Bearer <token>` on every request.
    #[arg(long, env = "OASIS_TOKEN", hide_env_values = true)]
    pub token: Option<String>,
    /// Append-only session log; existing sessions are restored from it.
    #[arg(long)]
    pub event_log: Option<PathBuf>,
    /// Pause sessions without activity for this many seconds.
    #[arg(long, default_value_t = 1800)]
    pub idle_secs: u64,
}

pub fn execute(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Generate(a) => generate(a),
        Command::Subsample(a) => subsample(a),
        Command::Sample(a) => sample(a),
        Command::Run(a) => run_cmd(a),
        Command::Diagnose(a) => diagnose(a),
        Command::Serve(a) => serve(a),
    }
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn generate(a: GenerateArgs) -> anyhow::Result<()> {
    let spec = SyntheticSpec {
        n: a.n,
        matches: a.matches,
        score_model: a.score_model,
        noise: a.noise,
        concentration: a.concentration,
        raw_scale: a.raw_scale,
        seed: a.seed,
    };
    let pool = generate_synthetic_pool(&spec)?;
    save_pool(&pool, &a.output)?;
    let f = pool.true_f_measure(0.5).map(|f| format!("{f:.4}")).unwrap_or_else(|_| "undefined".into());
    eprintln!(
        "wrote {} pairs ({} matches, imbalance {:.0}:1, F1 {f}) to {}",
        pool.len(),
        a.matches,
        spec.imbalance_ratio(),
        a.output.display()
    );
    Ok(())
}

fn subsample(a: SubsampleArgs) -> anyhow::Result<()> {
    let pool = a.pool.load()?;
    let sub = subsample_pool(&pool, a.size, a.seed)?;
    let mut out = create(&a.output)?;
    oasis_core::pool::write_pool(&sub, &mut out, a.pool.format()?.delimiter)?;
    out.flush()?;
    eprintln!("wrote {} of {} pairs to {}", sub.len(), pool.len(), a.output.display());
    Ok(())
}

fn sample(a: SampleArgs) -> anyhow::Result<()> {
    let pool = a.pool.load()?;
    let config = a.sampler.config();
    let oracle = match a.oracle {
        OracleArg::Deterministic => OracleKind::Deterministic,
        OracleArg::Noisy => OracleKind::Noisy { seed: a.oracle_seed },
    };
    let trace = run(&pool, oracle, &config)?;
    if let Some(path) = &a.trace {
        let mut out = create(path)?;
        write_trace(&trace, &pool, &mut out)?;
        out.flush()?;
    }
    let true_f = match a.oracle {
        OracleArg::Deterministic => pool.true_f_measure(config.alpha).ok(),
        OracleArg::Noisy => pool.expected_f_measure(config.alpha).ok(),
    };
    let summary = serde_json::json!({
        "strategy": config.strategy,
        "alpha": config.alpha,
        "iterations": trace.records.len(),
        "budget": trace.final_budget(),
        "estimate": trace.final_estimate(),
        "true_f": true_f,
    });
    println!("{summary}");
    Ok(())
}

fn run_cmd(a: RunArgs) -> anyhow::Result<()> {
    let mut spec = match &a.spec {
        Some(path) => ExperimentSpec::from_file(path)?,
        None => ExperimentSpec::default(),
    };
    let mut settings: Vec<(String, String)> = Vec::new();
    let mut push = |k: &str, v: String| settings.push((k.to_string(), v));
    if let Some(p) = &a.pool {
        push("pool", p.display().to_string());
    }
    if let Some(s) = &a.strategies {
        push("strategies", s.clone());
    }
    if let Some(r) = a.replications {
        push("replications", r.to_string());
    }
    if let Some(s) = a.seed_base {
        push("seed_base", s.to_string());
    }
    if let Some(w) = a.workers {
        push("workers", w.to_string());
    }
    if let Some(o) = &a.output {
        push("output", o.display().to_string());
    }
    for s in &a.settings {
        let (k, v) = s.split_once('=').with_context(|| format!("expected KEY=VALUE, got `{s}`"))?;
        settings.push((k.trim().to_string(), v.to_string()));
    }
    for (k, v) in &settings {
        spec.set(k, v).map_err(|reason| oasis_core::Error::Parameter {
            name: "set",
            reason: format!("{k}: {reason}"),
        })?;
    }
    spec.validate()?;
    let report = run_experiment(&spec)?;
    print_report(&report, io::stdout().lock())?;
    Ok(())
}

fn fmt_opt<T: std::fmt::Display>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_else(|| "-".into())
}

pub fn print_report<W: Write>(report: &ExperimentReport, mut out: W) -> io::Result<()> {
    writeln!(
        out,
        "pool: {} pairs, {} matches; {} replications from seed {}",
        report.pool_size,
        fmt_opt(report.match_count),
        report.replications,
        report.seed_base
    )?;
    writeln!(
        out,
        "{:<11} {:>8} {:>12} {:>14} {:>14} {:>10}",
        "strategy", "true F", "reliable at", "labels to 0.05", "final |err|", "final sd"
    )?;
    for s in &report.strategies {
        let last = s.metrics.rows.last();
        writeln!(
            out,
            "{:<11} {:>8.4} {:>12} {:>14} {:>14} {:>10}",
            s.strategy.name(),
            s.metrics.true_f,
            fmt_opt(s.metrics.first_reliable_budget()),
            fmt_opt(s.metrics.first_budget_within(ERROR_TARGET)),
            fmt_opt(last.and_then(|r| r.abs_err).map(|e| format!("{e:.4}"))),
            fmt_opt(last.and_then(|r| r.std_dev).map(|e| format!("{e:.4}"))),
        )?;
    }
    Ok(())
}

fn diagnose(a: DiagnoseArgs) -> anyhow::Result<()> {
    let pool = a.pool.load()?;
    let config = SamplerConfig { strategy: Strategy::Oasis, ..a.sampler.config() };
    config.validate()?;
    let reader =
        BufReader::new(File::open(&a.trace).with_context(|| format!("cannot open {}", a.trace.display()))?);
    let trace = read_trace(reader, &pool, Strategy::Oasis)?;
    let strata = config.stratify(&pool)?;
    let series = kl_to_optimal(&trace, &pool, &strata, &config)?;
    match &a.output {
        Some(path) => {
            let mut out = create(path)?;
            write_kl_series(&series, &mut out)?;
            out.flush()?;
        }
        None => write_kl_series(&series, io::stdout().lock())?,
    }
    Ok(())
}

fn serve(a: ServeArgs) -> anyhow::Result<()> {
    let manager = match &a.event_log {
        Some(path) => SessionManager::with_event_log(path)?,
        None => SessionManager::new(),
    };
    let idle = Duration::from_secs(a.idle_secs);
    let manager = Arc::new(manager.idle_window(idle));
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let sweeper = Arc::clone(&manager);
        let period = (idle / 4).max(Duration::from_secs(1));
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(period);
            loop {
                tick.tick().await;
                let paused = sweeper.sweep_idle();
                if paused > 0 {
                    tracing::info!(paused, "paused idle sessions");
                }
            }
        });
        let restored = manager.session_ids().len();
        let app = crate::server::router(manager, a.token);
        let listener = tokio::net::TcpListener::bind(a.addr).await?;
        tracing::info!(addr = %listener.local_addr()?, restored, "listening");
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}
