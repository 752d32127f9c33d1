use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::diagnostics::{kl_to_optimal, KlPoint};
use super::metrics::{write_metrics, BudgetCurve, MetricSeries};
use super::synthetic::{generate_synthetic_pool, subsample_pool, SyntheticSpec};
use crate::error::{Error, Result};
use crate::oracle::OracleKind;
use crate::pool::{load_pool, Pool, PoolFormat};
use crate::sampler::{run, write_trace, RunTrace, SamplerConfig, Strategy};
use crate::stratification::Strata;

/// Absolute-error threshold reported in experiment summaries.
pub const ERROR_TARGET: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PoolSource {
    File { path: PathBuf, delimiter: u8, scores_are_probabilities: Option<bool> },
    Synthetic(SyntheticSpec),
}

impl PoolSource {
    pub fn load(&self) -> Result<Pool> {
        match self {
            PoolSource::File { path, delimiter, scores_are_probabilities } => load_pool(
                path,
                &PoolFormat { delimiter: *delimiter, scores_are_probabilities: *scores_are_probabilities },
            ),
            PoolSource::Synthetic(spec) => generate_synthetic_pool(spec),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OracleChoice {
    /// Labels are the pool's `true_label` column.
    #[default]
    Deterministic,
    /// Labels are drawn from `true_match_prob`, freshly seeded per run.
    Noisy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub pool: PoolSource,
    /// Optional uniform subsample of the pool, drawn once with `seed_base`.
    pub subsample: Option<usize>,
    pub strategies: Vec<Strategy>,
    /// Sampler settings shared by all strategies.
    pub sampler: SamplerConfig,
    /// Full per-strategy replacements for `sampler`.
    pub overrides: BTreeMap<Strategy, SamplerConfig>,
    pub oracle: OracleChoice,
    pub replications: usize,
    /// Replication `r` of every strategy uses seed `seed_base + r`.
    pub seed_base: u64,
    pub workers: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub keep_traces: bool,
    /// Record the KL diagnostic for OASIS runs.
    pub diagnostics: bool,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            pool: PoolSource::Synthetic(SyntheticSpec::default()),
            subsample: None,
            strategies: vec![Strategy::Oasis, Strategy::Passive],
            sampler: SamplerConfig::default(),
            overrides: BTreeMap::new(),
            oracle: OracleChoice::Deterministic,
            replications: 200,
            seed_base: 0,
            workers: None,
            output_dir: None,
            keep_traces: false,
            diagnostics: false,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::param("replications", "must be at least 1"));
        }
        if self.strategies.is_empty() {
            return Err(Error::param("strategies", "must name at least one strategy"));
        }
        if self.workers == Some(0) {
            return Err(Error::param("workers", "must be positive"));
        }
        for &s in &self.strategies {
            self.config_for(s).validate()?;
        }
        Ok(())
    }

    /// Sampler configuration for `strategy`, seed not yet applied.
    pub fn config_for(&self, strategy: Strategy) -> SamplerConfig {
        let base = self.overrides.get(&strategy).unwrap_or(&self.sampler);
        SamplerConfig { strategy, ..base.clone() }
    }

    pub fn load_pool(&self) -> Result<Pool> {
        let pool = self.pool.load()?;
        match self.subsample {
            Some(target) => subsample_pool(&pool, target, self.seed_base),
            None => Ok(pool),
        }
    }

    fn oracle_for(&self, seed: u64) -> OracleKind {
        match self.oracle {
            OracleChoice::Deterministic => OracleKind::Deterministic,
            // Keep the label stream apart from the sampler's stream.
            OracleChoice::Noisy => OracleKind::Noisy { seed: seed ^ 0x9e37_79b9_7f4a_7c15 },
        }
    }

    fn truth(&self, pool: &Pool, alpha: f64) -> Result<f64> {
        match self.oracle {
            OracleChoice::Deterministic => pool.true_f_measure(alpha),
            OracleChoice::Noisy => pool.expected_f_measure(alpha),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyReport {
    pub strategy: Strategy,
    pub config: SamplerConfig,
    pub metrics: MetricSeries,
    pub final_estimates: Vec<Option<f64>>,
    pub final_budgets: Vec<usize>,
    #[serde(skip)]
    pub traces: Vec<RunTrace>,
    #[serde(skip)]
    pub kl: Vec<Vec<KlPoint>>,
}

impl StrategyReport {
    /// `|F̂ - F|` of the final estimate of every run where it is defined.
    pub fn final_abs_errors(&self) -> Vec<f64> {
        self.final_estimates.iter().flatten().map(|f| (f - self.metrics.true_f).abs()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub pool_size: usize,
    pub match_count: Option<usize>,
    pub replications: usize,
    pub seed_base: u64,
    pub strategies: Vec<StrategyReport>,
}

impl ExperimentReport {
    pub fn strategy(&self, s: Strategy) -> Option<&StrategyReport> {
        self.strategies.iter().find(|r| r.strategy == s)
    }
}

struct RunOutcome {
    curve: BudgetCurve,
    trace: Option<RunTrace>,
    kl: Option<Vec<KlPoint>>,
}

/// Runs every strategy `replications` times on one fixed pool and
/// aggregates the error curves. Results depend only on the spec, not on
/// the number of worker threads.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    let pool = spec.load_pool()?;
    let report = run_experiment_on(spec, &pool)?;
    if let Some(dir) = &spec.output_dir {
        write_report(&report, &pool, dir)?;
    }
    Ok(report)
}

/// Like [`run_experiment`] with the pool already loaded; writes nothing.
pub fn run_experiment_on(spec: &ExperimentSpec, pool: &Pool) -> Result<ExperimentReport> {
    spec.validate()?;
    let mut plans = Vec::with_capacity(spec.strategies.len());
    for &strategy in &spec.strategies {
        let config = spec.config_for(strategy);
        let truth = spec.truth(pool, config.alpha)?;
        let strata: Option<Strata> =
            (spec.diagnostics && strategy == Strategy::Oasis).then(|| config.stratify(pool)).transpose()?;
        plans.push((config, truth, strata));
    }

    let jobs: Vec<(usize, u64)> =
        (0..plans.len()).flat_map(|s| (0..spec.replications as u64).map(move |r| (s, r))).collect();
    let execute = || {
        jobs.par_iter()
            .map(|&(s, r)| {
                let (base, _, strata) = &plans[s];
                let seed = spec.seed_base.wrapping_add(r);
                let config = SamplerConfig { seed, ..base.clone() };
                let trace = run(pool, spec.oracle_for(seed), &config)?;
                let kl = strata.as_ref().map(|st| kl_to_optimal(&trace, pool, st, &config)).transpose()?;
                Ok(RunOutcome {
                    curve: BudgetCurve::from_trace(&trace),
                    trace: spec.keep_traces.then_some(trace),
                    kl,
                })
            })
            .collect::<Result<Vec<_>>>()
    };
    let outcomes = match spec.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::param("workers", e.to_string()))?
            .install(execute)?,
        None => execute()?,
    };

    let mut outcomes = outcomes.into_iter();
    let mut strategies = Vec::with_capacity(plans.len());
    for (config, truth, _) in plans {
        let runs: Vec<RunOutcome> = outcomes.by_ref().take(spec.replications).collect();
        let curves: Vec<BudgetCurve> = runs.iter().map(|o| o.curve.clone()).collect();
        let metrics =
            MetricSeries::from_curves_to(config.strategy, &curves, truth, config.label_budget.unwrap_or(0));
        let final_estimates = curves.iter().map(|c| c.at(c.max_budget())).collect();
        let final_budgets = curves.iter().map(BudgetCurve::max_budget).collect();
        let mut traces = Vec::new();
        let mut kl = Vec::new();
        for o in runs {
            traces.extend(o.trace);
            kl.extend(o.kl);
        }
        strategies.push(StrategyReport {
            strategy: config.strategy,
            config,
            metrics,
            final_estimates,
            final_budgets,
            traces,
            kl,
        });
    }
    Ok(ExperimentReport {
        pool_size: pool.len(),
        match_count: pool.match_count(),
        replications: spec.replications,
        seed_base: spec.seed_base,
        strategies,
    })
}

#[derive(Serialize)]
struct StrategySummary<'a> {
    strategy: Strategy,
    config: &'a SamplerConfig,
    true_f: f64,
    first_reliable_budget: Option<usize>,
    first_budget_within_target: Option<usize>,
    error_target: f64,
    mean_final_abs_err: Option<f64>,
}

#[derive(Serialize)]
struct Summary<'a> {
    pool_size: usize,
    match_count: Option<usize>,
    pool_fixed_across_replications: bool,
    replications: usize,
    seed_base: u64,
    strategies: Vec<StrategySummary<'a>>,
}

/// Writes `metrics_<strategy>.csv`, `summary.json`, and when present the
/// retained traces and KL series.
pub fn write_report(report: &ExperimentReport, pool: &Pool, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut summaries = Vec::new();
    for sr in &report.strategies {
        let name = sr.strategy.name();
        write_metrics(&sr.metrics, BufWriter::new(File::create(dir.join(format!("metrics_{name}.csv")))?))?;
        if !sr.traces.is_empty() {
            let tdir = dir.join("traces");
            fs::create_dir_all(&tdir)?;
            for (r, trace) in sr.traces.iter().enumerate() {
                let f = File::create(tdir.join(format!("{name}_run{r:04}.csv")))?;
                write_trace(trace, pool, BufWriter::new(f))?;
            }
        }
        if !sr.kl.is_empty() {
            let mut wtr =
                csv::Writer::from_writer(BufWriter::new(File::create(dir.join(format!("kl_{name}.csv")))?));
            wtr.write_record(["run", "t", "budget", "kl", "pi_abs_err", "v_abs_err"])?;
            for (r, series) in sr.kl.iter().enumerate() {
                for p in series {
                    wtr.write_record([
                        r.to_string(),
                        p.t.to_string(),
                        p.budget.to_string(),
                        p.kl.to_string(),
                        p.pi_abs_err.to_string(),
                        p.v_abs_err.to_string(),
                    ])?;
                }
            }
            wtr.flush()?;
        }
        let errs = sr.final_abs_errors();
        summaries.push(StrategySummary {
            strategy: sr.strategy,
            config: &sr.config,
            true_f: sr.metrics.true_f,
            first_reliable_budget: sr.metrics.first_reliable_budget(),
            first_budget_within_target: sr.metrics.first_budget_within(ERROR_TARGET),
            error_target: ERROR_TARGET,
            mean_final_abs_err: (!errs.is_empty()).then(|| errs.iter().sum::<f64>() / errs.len() as f64),
        });
    }
    let summary = Summary {
        pool_size: report.pool_size,
        match_count: report.match_count,
        pool_fixed_across_replications: true,
        replications: report.replications,
        seed_base: report.seed_base,
        strategies: summaries,
    };
    serde_json::to_writer_pretty(BufWriter::new(File::create(dir.join("summary.json"))?), &summary)?;
    Ok(())
}

fn parse<T: std::str::FromStr>(value: &str) -> std::result::Result<T, String> {
    value.parse().map_err(|_| format!("cannot parse `{value}`"))
}

fn parse_bool(value: &str) -> std::result::Result<bool, String> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(format!("expected true or false, got `{value}`")),
    }
}

/// Sets one sampler field by name. Returns `Ok(false)` for unknown keys.
pub fn set_sampler_field(
    config: &mut SamplerConfig,
    key: &str,
    value: &str,
) -> std::result::Result<bool, String> {
    match key {
        "strategy" => config.strategy = value.parse().map_err(|e: Error| e.to_string())?,
        "alpha" => config.alpha = parse(value)?,
        "beta" => config.alpha = crate::estimators::alpha_from_beta(parse(value)?),
        "epsilon" => config.epsilon = parse(value)?,
        "eta" => config.eta = if value == "auto" { None } else { Some(parse(value)?) },
        "iterations" => config.iterations = parse(value)?,
        "label_budget" => config.label_budget = if value == "none" { None } else { Some(parse(value)?) },
        "strata" | "desired_strata" => config.desired_strata = parse(value)?,
        "bins" | "histogram_bins" => config.histogram_bins = parse(value)?,
        "stratification" => config.stratification = value.parse().map_err(|e: Error| e.to_string())?,
        "tau" => config.tau = if value == "none" { None } else { Some(parse(value)?) },
        "prior_decay" => config.prior_decay = parse_bool(value)?,
        "seed" => config.seed = parse(value)?,
        _ => return Ok(false),
    }
    Ok(true)
}

fn synthetic_mut(spec: &mut ExperimentSpec) -> &mut SyntheticSpec {
    if !matches!(spec.pool, PoolSource::Synthetic(_)) {
        spec.pool = PoolSource::Synthetic(SyntheticSpec::default());
    }
    match &mut spec.pool {
        PoolSource::Synthetic(s) => s,
        PoolSource::File { .. } => unreachable!(),
    }
}

impl ExperimentSpec {
    /// Applies one `key = value` setting. Sampler keys may be prefixed with
    /// a strategy name (`passive.iterations`) to override that strategy only.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let value = value.trim();
        match key {
            "pool" => {
                self.pool = PoolSource::File {
                    path: PathBuf::from(value),
                    delimiter: b',',
                    scores_are_probabilities: None,
                }
            }
            "delimiter" | "scores_are_probabilities" => match &mut self.pool {
                PoolSource::File { delimiter, scores_are_probabilities, .. } => {
                    if key == "delimiter" {
                        *delimiter = match value {
                            "tab" | "\\t" => b'\t',
                            v if v.len() == 1 => v.as_bytes()[0],
                            v => return Err(format!("delimiter must be one character, got `{v}`")),
                        };
                    } else {
                        *scores_are_probabilities = Some(parse_bool(value)?);
                    }
                }
                PoolSource::Synthetic(_) => return Err(format!("`{key}` needs a preceding `pool = <path>`")),
            },
            "subsample" => self.subsample = Some(parse(value)?),
            "strategies" => {
                self.strategies = value
                    .split(',')
                    .map(|s| s.trim().parse::<Strategy>().map_err(|e| e.to_string()))
                    .collect::<std::result::Result<_, _>>()?
            }
            "oracle" => {
                self.oracle = match value {
                    "deterministic" => OracleChoice::Deterministic,
                    "noisy" => OracleChoice::Noisy,
                    v => return Err(format!("expected deterministic or noisy, got `{v}`")),
                }
            }
            "replications" => self.replications = parse(value)?,
            "seed_base" => self.seed_base = parse(value)?,
            "workers" => self.workers = Some(parse(value)?),
            "output" | "output_dir" => self.output_dir = Some(PathBuf::from(value)),
            "keep_traces" => self.keep_traces = parse_bool(value)?,
            "diagnostics" => self.diagnostics = parse_bool(value)?,
            _ => {
                if let Some(field) = key.strip_prefix("synthetic.") {
                    let s = synthetic_mut(self);
                    match field {
                        "n" => s.n = parse(value)?,
                        "matches" => s.matches = parse(value)?,
                        "score_model" => s.score_model = value.parse().map_err(|e: Error| e.to_string())?,
                        "noise" => s.noise = parse(value)?,
                        "concentration" => s.concentration = parse(value)?,
                        "raw_scale" => s.raw_scale = parse(value)?,
                        "seed" => s.seed = parse(value)?,
                        _ => return Err(format!("unknown key `{key}`")),
                    }
                    return Ok(());
                }
                if let Some((prefix, field)) = key.split_once('.') {
                    let strategy: Strategy = prefix.parse().map_err(|_| format!("unknown key `{key}`"))?;
                    let base = self.config_for(strategy);
                    let cfg = self.overrides.entry(strategy).or_insert(base);
                    return match set_sampler_field(cfg, field, value)? {
                        true => Ok(()),
                        false => Err(format!("unknown key `{key}`")),
                    };
                }
                if !set_sampler_field(&mut self.sampler, key, value)? {
                    return Err(format!("unknown key `{key}`"));
                }
            }
        }
        Ok(())
    }

    /// Parses a flat `key = value` file. Blank lines and `#` comments are
    /// ignored; later keys win.
    pub fn parse(text: &str) -> Result<Self> {
        let mut spec = ExperimentSpec::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::SpecFile { line: i + 1, message };
            let (key, value) =
                line.split_once('=').ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            spec.set(key.trim(), value).map_err(err)?;
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }
}
