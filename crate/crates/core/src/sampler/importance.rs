use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Draw, Sampler, SamplerConfig, Strategy};
use crate::bayes::{initialize_model, logistic};
use crate::error::{Error, Result};
use crate::estimators::WeightedSums;
use crate::instrumental::pairwise_optimal_dist;
use crate::pool::Pool;

/// Static importance sampling from the pairwise optimal distribution, with
/// scores standing in for oracle probabilities.
#[derive(Debug, Clone)]
pub struct ImportanceSampler {
    q: Vec<f64>,
    index: WeightedIndex<f64>,
    f_guess: f64,
    sums: WeightedSums,
    alpha: f64,
    rng: ChaCha8Rng,
}

/// Scores mapped into `[0, 1]`: unchanged when already probabilities,
/// otherwise the logistic of `score - tau`.
pub fn proxy_probabilities(pool: &Pool, tau: Option<f64>) -> Vec<f64> {
    if pool.scores_are_probabilities() {
        pool.pairs().iter().map(|p| p.score).collect()
    } else {
        let tau = tau.unwrap_or(0.0);
        pool.pairs().iter().map(|p| logistic(p.score - tau)).collect()
    }
}

impl ImportanceSampler {
    pub fn new(pool: &Pool, config: &SamplerConfig) -> Result<Self> {
        config.validate()?;
        let strata = config.stratify(pool)?;
        let eta = config.eta_for(strata.len());
        let (_, f_guess) =
            initialize_model(pool, &strata, config.alpha, config.tau, eta, config.prior_decay)?;
        let proxy = proxy_probabilities(pool, config.tau);
        let q = pairwise_optimal_dist(pool, &proxy, f_guess, config.alpha)?;
        let index = WeightedIndex::new(&q).map_err(|_| Error::DegenerateDistribution)?;
        Ok(ImportanceSampler {
            q,
            index,
            f_guess,
            sums: WeightedSums::default(),
            alpha: config.alpha,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
        })
    }

    pub fn distribution(&self) -> &[f64] {
        &self.q
    }

    pub fn f_guess(&self) -> f64 {
        self.f_guess
    }
}

impl Sampler for ImportanceSampler {
    fn strategy(&self) -> Strategy {
        Strategy::Is
    }

    fn propose(&mut self, pool: &Pool) -> Draw {
        let i = self.index.sample(&mut self.rng);
        Draw { pair_index: i, stratum: None, weight: pool.marginal()[i] / self.q[i] }
    }

    fn observe(&mut self, pool: &Pool, draw: &Draw, label: bool) {
        self.sums.add(draw.weight, label, pool.pair(draw.pair_index).predicted_label);
    }

    fn estimate(&self) -> Option<f64> {
        self.sums.f_measure(self.alpha)
    }
}
