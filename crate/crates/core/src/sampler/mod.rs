//! Sampling strategies sharing one propose/observe interface.
//!
//! A sampler proposes a pair (with its importance weight), the caller
//! obtains a label from an oracle, and the sampler absorbs it. `run` drives
//! that loop for a fixed number of iterations and records a [`RunTrace`].

mod importance;
mod oasis;
mod passive;
mod stratified;

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_unit, Error, Result};
use crate::oracle::{Oracle, OracleKind};
use crate::pool::Pool;
use crate::stratification::{
    csf_stratify, equal_size_stratify, Strata, DEFAULT_HISTOGRAM_BINS, DEFAULT_STRATA,
};

pub use importance::ImportanceSampler;
pub use oasis::OasisSampler;
pub use passive::PassiveSampler;
pub use stratified::StratifiedSampler;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    Oasis,
    Passive,
    Stratified,
    Is,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::Oasis, Strategy::Passive, Strategy::Stratified, Strategy::Is];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Oasis => "oasis",
            Strategy::Passive => "passive",
            Strategy::Stratified => "stratified",
            Strategy::Is => "is",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::param("strategy", format!("unknown strategy `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StratificationMethod {
    #[default]
    Csf,
    EqualSize,
}

impl FromStr for StratificationMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "csf" => Ok(StratificationMethod::Csf),
            "equal_size" | "equal-size" => Ok(StratificationMethod::EqualSize),
            other => Err(Error::param("stratification", format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub strategy: Strategy,
    /// F-measure weight; 1 is precision, 0 is recall.
    pub alpha: f64,
    /// Exploration share of the epsilon-greedy mixture.
    pub epsilon: f64,
    /// Prior strength. `None` means twice the number of strata.
    pub eta: Option<f64>,
    pub iterations: usize,
    /// Stop early once this many distinct labels have been used.
    pub label_budget: Option<usize>,
    pub desired_strata: usize,
    pub histogram_bins: usize,
    pub stratification: StratificationMethod,
    /// Score threshold for mapping raw scores through the logistic.
    pub tau: Option<f64>,
    pub prior_decay: bool,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            strategy: Strategy::Oasis,
            alpha: 0.5,
            epsilon: crate::instrumental::DEFAULT_EPSILON,
            eta: None,
            iterations: 5000,
            label_budget: None,
            desired_strata: DEFAULT_STRATA,
            histogram_bins: DEFAULT_HISTOGRAM_BINS,
            stratification: StratificationMethod::Csf,
            tau: None,
            prior_decay: false,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        check_unit("alpha", self.alpha)?;
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::param("epsilon", format!("must lie in (0, 1], got {}", self.epsilon)));
        }
        if let Some(eta) = self.eta {
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(Error::param("eta", format!("must be positive, got {eta}")));
            }
        }
        if self.iterations == 0 {
            return Err(Error::param("iterations", "must be positive"));
        }
        if self.label_budget == Some(0) {
            return Err(Error::param("label_budget", "must be positive"));
        }
        if self.desired_strata == 0 {
            return Err(Error::param("desired_strata", "must be positive"));
        }
        if self.histogram_bins == 0 {
            return Err(Error::param("histogram_bins", "must be positive"));
        }
        if let Some(tau) = self.tau {
            if !tau.is_finite() {
                return Err(Error::param("tau", "must be finite"));
            }
        }
        Ok(())
    }

    pub fn stratify(&self, pool: &Pool) -> Result<Strata> {
        match self.stratification {
            StratificationMethod::Csf => csf_stratify(pool, self.desired_strata, self.histogram_bins),
            StratificationMethod::EqualSize => equal_size_stratify(pool, self.desired_strata),
        }
    }

    pub fn eta_for(&self, strata: usize) -> f64 {
        self.eta.unwrap_or(2.0 * strata as f64)
    }
}

/// A proposed query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Draw {
    pub pair_index: usize,
    pub stratum: Option<usize>,
    pub weight: f64,
}

pub trait Sampler {
    fn strategy(&self) -> Strategy;

    fn propose(&mut self, pool: &Pool) -> Draw;

    fn observe(&mut self, pool: &Pool, draw: &Draw, label: bool);

    /// Current estimate of the F-measure, if defined.
    fn estimate(&self) -> Option<f64>;

    /// Posterior or empirical per-stratum match rates, where meaningful.
    fn stratum_rates(&self) -> Option<Vec<f64>> {
        None
    }

    /// Stratum sampling distribution for the next draw, where meaningful.
    fn stratum_distribution(&self) -> Option<Vec<f64>> {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub t: usize,
    pub pair_index: usize,
    pub stratum: Option<usize>,
    pub weight: f64,
    pub label: bool,
    pub prediction: bool,
    pub estimate: Option<f64>,
    pub budget: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunTrace {
    pub strategy: Strategy,
    pub records: Vec<TraceRecord>,
    pub final_posterior: Option<Vec<f64>>,
    pub final_instrumental: Option<Vec<f64>>,
}

impl RunTrace {
    pub fn final_estimate(&self) -> Option<f64> {
        self.records.last().and_then(|r| r.estimate)
    }

    pub fn final_budget(&self) -> usize {
        self.records.last().map_or(0, |r| r.budget)
    }

    /// Estimate carried forward to label budget `budget`: the estimate
    /// after the last iteration whose budget does not exceed it.
    pub fn estimate_at_budget(&self, budget: usize) -> Option<f64> {
        let idx = self.records.partition_point(|r| r.budget <= budget);
        idx.checked_sub(1).and_then(|i| self.records[i].estimate)
    }
}

/// Runs `sampler` for `iterations` steps against `oracle`.
pub fn drive<S: Sampler + ?Sized>(
    sampler: &mut S,
    pool: &Pool,
    oracle: &mut Oracle,
    iterations: usize,
) -> Result<RunTrace> {
    drive_until(sampler, pool, oracle, iterations, None)
}

/// Like [`drive`], stopping after the iteration that uses the
/// `label_budget`-th distinct label.
pub fn drive_until<S: Sampler + ?Sized>(
    sampler: &mut S,
    pool: &Pool,
    oracle: &mut Oracle,
    iterations: usize,
    label_budget: Option<usize>,
) -> Result<RunTrace> {
    let mut records = Vec::with_capacity(iterations.min(1 << 20));
    for t in 1..=iterations {
        if label_budget.is_some_and(|b| oracle.budget() >= b) {
            break;
        }
        let draw = sampler.propose(pool);
        let label = oracle.query(pool, draw.pair_index)?;
        sampler.observe(pool, &draw, label);
        records.push(TraceRecord {
            t,
            pair_index: draw.pair_index,
            stratum: draw.stratum,
            weight: draw.weight,
            label,
            prediction: pool.pair(draw.pair_index).predicted_label,
            estimate: sampler.estimate(),
            budget: oracle.budget(),
        });
    }
    Ok(RunTrace {
        strategy: sampler.strategy(),
        records,
        final_posterior: sampler.stratum_rates(),
        final_instrumental: sampler.stratum_distribution(),
    })
}

/// Builds the sampler named by `config.strategy`.
pub fn build_sampler(pool: &Pool, config: &SamplerConfig) -> Result<Box<dyn Sampler + Send>> {
    config.validate()?;
    Ok(match config.strategy {
        Strategy::Oasis => Box::new(OasisSampler::new(pool, config)?),
        Strategy::Passive => Box::new(PassiveSampler::new(pool, config)?),
        Strategy::Stratified => Box::new(StratifiedSampler::new(pool, config)?),
        Strategy::Is => Box::new(ImportanceSampler::new(pool, config)?),
    })
}

/// Runs the configured strategy with a fresh oracle of kind `oracle`.
pub fn run(pool: &Pool, oracle: OracleKind, config: &SamplerConfig) -> Result<RunTrace> {
    let mut sampler = build_sampler(pool, config)?;
    let mut oracle = Oracle::new(oracle);
    drive_until(sampler.as_mut(), pool, &mut oracle, config.iterations, config.label_budget)
}

fn with_strategy(config: &SamplerConfig, strategy: Strategy) -> SamplerConfig {
    SamplerConfig { strategy, ..config.clone() }
}

pub fn run_oasis(pool: &Pool, oracle: OracleKind, config: &SamplerConfig) -> Result<RunTrace> {
    run(pool, oracle, &with_strategy(config, Strategy::Oasis))
}

pub fn run_passive(pool: &Pool, oracle: OracleKind, config: &SamplerConfig) -> Result<RunTrace> {
    run(pool, oracle, &with_strategy(config, Strategy::Passive))
}

pub fn run_stratified(pool: &Pool, oracle: OracleKind, config: &SamplerConfig) -> Result<RunTrace> {
    run(pool, oracle, &with_strategy(config, Strategy::Stratified))
}

pub fn run_is(pool: &Pool, oracle: OracleKind, config: &SamplerConfig) -> Result<RunTrace> {
    run(pool, oracle, &with_strategy(config, Strategy::Is))
}

/// Index drawn from `probs` by inverse-CDF with one uniform variate.
pub(crate) fn draw_index<R: Rng + ?Sized>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding left `u` beyond the accumulated total.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

pub const TRACE_HEADER: [&str; 8] =
    ["t", "pair_id", "stratum", "w", "label", "prediction", "f_estimate", "budget"];

/// One CSV row per iteration. Blank cells mark absent strata and undefined
/// estimates.
pub fn write_trace<W: Write>(trace: &RunTrace, pool: &Pool, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(TRACE_HEADER)?;
    let bit = |b: bool| if b { "1" } else { "0" };
    for r in &trace.records {
        wtr.write_record([
            r.t.to_string().as_str(),
            &pool.pair(r.pair_index).pair_id,
            &r.stratum.map(|s| s.to_string()).unwrap_or_default(),
            &r.weight.to_string(),
            bit(r.label),
            bit(r.prediction),
            &r.estimate.map(|f| f.to_string()).unwrap_or_default(),
            &r.budget.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Parses a trace written by [`write_trace`], resolving pair ids in `pool`.
pub fn read_trace<R: Read>(reader: R, pool: &Pool, strategy: Strategy) -> Result<RunTrace> {
    let index: HashMap<&str, usize> =
        pool.pairs().iter().enumerate().map(|(i, p)| (p.pair_id.as_str(), i)).collect();
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    for col in TRACE_HEADER {
        if !headers.iter().any(|h| h == col) {
            return Err(Error::MissingColumn(col.to_string()));
        }
    }
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |m: String| Error::InvalidRow { row: line, message: m };
        let get = |i: usize| row.get(i).unwrap_or("");
        let num = |i: usize| -> Result<f64> {
            get(i).parse().map_err(|_| bad(format!("`{}` is not a number", get(i))))
        };
        let int = |i: usize| -> Result<usize> {
            get(i).parse().map_err(|_| bad(format!("`{}` is not an integer", get(i))))
        };
        let flag = |i: usize| -> Result<bool> {
            match get(i) {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(bad(format!("`{other}` is not 0 or 1"))),
            }
        };
        let pair_index =
            *index.get(get(1)).ok_or_else(|| bad(format!("pair `{}` is not in the pool", get(1))))?;
        records.push(TraceRecord {
            t: int(0)?,
            pair_index,
            stratum: if get(2).is_empty() { None } else { Some(int(2)?) },
            weight: num(3)?,
            label: flag(4)?,
            prediction: flag(5)?,
            estimate: if get(6).is_empty() { None } else { Some(num(6)?) },
            budget: int(7)?,
        });
    }
    Ok(RunTrace { strategy, records, final_posterior: None, final_instrumental: None })
}
