use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Draw, Sampler, SamplerConfig, Strategy};
use crate::error::Result;
use crate::estimators::WeightedSums;
use crate::pool::Pool;

/// Uniform sampling with replacement and unit weights.
#[derive(Debug, Clone)]
pub struct PassiveSampler {
    sums: WeightedSums,
    alpha: f64,
    rng: ChaCha8Rng,
}

impl PassiveSampler {
    pub fn new(pool: &Pool, config: &SamplerConfig) -> Result<Self> {
        config.validate()?;
        if pool.is_empty() {
            return Err(crate::Error::EmptyPool);
        }
        Ok(PassiveSampler {
            sums: WeightedSums::default(),
            alpha: config.alpha,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
        })
    }
}

impl Sampler for PassiveSampler {
    fn strategy(&self) -> Strategy {
        Strategy::Passive
    }

    fn propose(&mut self, pool: &Pool) -> Draw {
        Draw { pair_index: self.rng.random_range(0..pool.len()), stratum: None, weight: 1.0 }
    }

    fn observe(&mut self, pool: &Pool, draw: &Draw, label: bool) {
        self.sums.add(1.0, label, pool.pair(draw.pair_index).predicted_label);
    }

    fn estimate(&self) -> Option<f64> {
        self.sums.f_measure(self.alpha)
    }
}
