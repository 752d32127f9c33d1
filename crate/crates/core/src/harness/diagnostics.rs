use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::instrumental::optimal_stratum_weights;
use crate::pool::Pool;
use crate::sampler::{Draw, OasisSampler, RunTrace, Sampler, SamplerConfig};
use crate::stratification::Strata;

/// `Σ p_k ln(p_k / q_k)` with `0 ln 0 = 0`. Infinite when some `q_k = 0`
/// carries positive `p_k`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(&pk, &qk)| match (pk > 0.0, qk > 0.0) {
            (false, _) => 0.0,
            (true, false) => f64::INFINITY,
            (true, true) => pk * (pk / qk).ln(),
        })
        .sum()
}

/// Stratum match rates, F-measure and optimal stratum distribution
/// computed from the ground truth.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrueOptimum {
    pub match_rates: Vec<f64>,
    pub f_measure: f64,
    pub v_star: Vec<f64>,
}

pub fn true_optimum(pool: &Pool, strata: &Strata, alpha: f64) -> Result<TrueOptimum> {
    let f_measure = pool.true_f_measure(alpha)?;
    let mut match_rates = Vec::with_capacity(strata.len());
    for k in 0..strata.len() {
        let members = strata.members(k);
        let mut matches = 0usize;
        for &i in members {
            let pair = pool.pair(i);
            let label = pair.true_label.ok_or_else(|| Error::IncompleteGroundTruth(pair.pair_id.clone()))?;
            matches += usize::from(label);
        }
        match_rates.push(matches as f64 / members.len() as f64);
    }
    let v_star =
        optimal_stratum_weights(strata.weights(), strata.mean_predictions(), &match_rates, f_measure, alpha)?;
    Ok(TrueOptimum { match_rates, f_measure, v_star })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KlPoint {
    pub t: usize,
    pub budget: usize,
    /// `KL(v* ‖ v*(t))`.
    pub kl: f64,
    /// Mean absolute error of the posterior match rates.
    pub pi_abs_err: f64,
    /// Mean absolute error of the estimated optimal distribution.
    pub v_abs_err: f64,
}

fn mean_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

/// Replays an OASIS trace and compares the sampler's estimate of the
/// optimal stratum distribution with the true one after every iteration.
/// The first point (`t = 0`) is the prior.
pub fn kl_to_optimal(
    trace: &RunTrace,
    pool: &Pool,
    strata: &Strata,
    config: &SamplerConfig,
) -> Result<Vec<KlPoint>> {
    let truth = true_optimum(pool, strata, config.alpha)?;
    let mut sampler = OasisSampler::with_strata(pool, strata.clone(), config)?;
    let point = |s: &OasisSampler, t: usize, budget: usize| {
        let v = s.instrumental().optimal_part;
        KlPoint {
            t,
            budget,
            kl: kl_divergence(&truth.v_star, &v),
            pi_abs_err: mean_abs_diff(&truth.match_rates, &s.model().means()),
            v_abs_err: mean_abs_diff(&truth.v_star, &v),
        }
    };
    let mut series = Vec::with_capacity(trace.records.len() + 1);
    series.push(point(&sampler, 0, 0));
    for r in &trace.records {
        let stratum = r.stratum.ok_or_else(|| {
            Error::param("trace", format!("iteration {} has no stratum; not an OASIS trace", r.t))
        })?;
        let draw = Draw { pair_index: r.pair_index, stratum: Some(stratum), weight: r.weight };
        sampler.observe(pool, &draw, r.label);
        series.push(point(&sampler, r.t, r.budget));
    }
    Ok(series)
}

/// KL value carried forward to `budget`.
pub fn kl_at_budget(series: &[KlPoint], budget: usize) -> Option<f64> {
    let idx = series.partition_point(|p| p.budget <= budget);
    idx.checked_sub(1).map(|i| series[i].kl)
}

pub fn write_kl_series<W: Write>(series: &[KlPoint], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["t", "budget", "kl", "pi_abs_err", "v_abs_err"])?;
    for p in series {
        wtr.write_record([
            p.t.to_string(),
            p.budget.to_string(),
            p.kl.to_string(),
            p.pi_abs_err.to_string(),
            p.v_abs_err.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
