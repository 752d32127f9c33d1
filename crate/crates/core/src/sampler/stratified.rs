use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{draw_index, Draw, Sampler, SamplerConfig, Strategy};
use crate::error::Result;
use crate::estimators::{stratified_f_estimate, StratumTally};
use crate::pool::Pool;
use crate::stratification::Strata;

/// Proportional stratified sampling: strata drawn by weight, pairs
/// uniformly within, estimate from per-stratum sample proportions.
#[derive(Debug, Clone)]
pub struct StratifiedSampler {
    strata: Strata,
    tallies: Vec<StratumTally>,
    alpha: f64,
    rng: ChaCha8Rng,
}

impl StratifiedSampler {
    pub fn new(pool: &Pool, config: &SamplerConfig) -> Result<Self> {
        config.validate()?;
        let strata = config.stratify(pool)?;
        let k = strata.len();
        Ok(StratifiedSampler {
            strata,
            tallies: vec![StratumTally::default(); k],
            alpha: config.alpha,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
        })
    }

    pub fn strata(&self) -> &Strata {
        &self.strata
    }

    pub fn tallies(&self) -> &[StratumTally] {
        &self.tallies
    }
}

impl Sampler for StratifiedSampler {
    fn strategy(&self) -> Strategy {
        Strategy::Stratified
    }

    fn propose(&mut self, _pool: &Pool) -> Draw {
        let k = draw_index(&mut self.rng, self.strata.weights());
        let members = self.strata.members(k);
        Draw { pair_index: members[self.rng.random_range(0..members.len())], stratum: Some(k), weight: 1.0 }
    }

    fn observe(&mut self, pool: &Pool, draw: &Draw, label: bool) {
        let k = draw.stratum.expect("stratified draws carry a stratum");
        self.tallies[k].add(label, pool.pair(draw.pair_index).predicted_label);
    }

    fn estimate(&self) -> Option<f64> {
        stratified_f_estimate(&self.tallies, &self.strata, self.alpha)
    }

    fn stratum_rates(&self) -> Option<Vec<f64>> {
        Some(self.tallies.iter().map(|t| t.match_rate().unwrap_or(0.0)).collect())
    }

    fn stratum_distribution(&self) -> Option<Vec<f64>> {
        Some(self.strata.weights().to_vec())
    }
}
