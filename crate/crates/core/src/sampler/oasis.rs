use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{draw_index, Draw, Sampler, SamplerConfig, Strategy};
use crate::bayes::{initialize_model, PosteriorMatrix};
use crate::error::Result;
use crate::estimators::WeightedSums;
use crate::instrumental::{mix, optimal_stratum_weights_unchecked, InstrumentalDist};
use crate::pool::Pool;
use crate::stratification::Strata;

/// Adaptive stratified importance sampler.
///
/// Each iteration recomputes the epsilon-greedy stratum distribution from
/// the current posterior match rates and F-measure estimate, draws a
/// stratum from it, draws a pair uniformly within that stratum and weights
/// the sample by `weight_k / v_k`.
#[derive(Debug, Clone)]
pub struct OasisSampler {
    strata: Strata,
    model: PosteriorMatrix,
    initial_f: f64,
    sums: WeightedSums,
    alpha: f64,
    epsilon: f64,
    rng: ChaCha8Rng,
    iteration: usize,
}

impl OasisSampler {
    pub fn new(pool: &Pool, config: &SamplerConfig) -> Result<Self> {
        config.validate()?;
        let strata = config.stratify(pool)?;
        Self::with_strata(pool, strata, config)
    }

    /// Like [`OasisSampler::new`] with externally built strata.
    pub fn with_strata(pool: &Pool, strata: Strata, config: &SamplerConfig) -> Result<Self> {
        config.validate()?;
        let eta = config.eta_for(strata.len());
        let (model, initial_f) =
            initialize_model(pool, &strata, config.alpha, config.tau, eta, config.prior_decay)?;
        Ok(OasisSampler {
            strata,
            model,
            initial_f,
            sums: WeightedSums::default(),
            alpha: config.alpha,
            epsilon: config.epsilon,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            iteration: 0,
        })
    }

    /// Sampler with the exploration floor switched off (`epsilon = 0`).
    /// Without the floor a stratum whose optimal mass vanishes is never
    /// visited again, which breaks consistency.
    #[cfg(feature = "unfloored")]
    pub fn new_unfloored(pool: &Pool, config: &SamplerConfig) -> Result<Self> {
        let mut sampler = Self::new(pool, config)?;
        sampler.epsilon = 0.0;
        Ok(sampler)
    }

    /// Like [`OasisSampler::new_unfloored`] with a caller-supplied prior.
    #[cfg(feature = "unfloored")]
    pub fn unfloored_with_prior(
        pool: &Pool,
        config: &SamplerConfig,
        prior_pi: Vec<f64>,
        initial_f: f64,
    ) -> Result<Self> {
        let mut sampler = Self::new_unfloored(pool, config)?;
        let eta = sampler.model.eta();
        sampler.model = PosteriorMatrix::new(prior_pi, eta, config.prior_decay)?;
        sampler.initial_f = initial_f;
        Ok(sampler)
    }

    pub fn strata(&self) -> &Strata {
        &self.strata
    }

    pub fn model(&self) -> &PosteriorMatrix {
        &self.model
    }

    pub fn initial_f(&self) -> f64 {
        self.initial_f
    }

    pub fn sums(&self) -> WeightedSums {
        self.sums
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// F-measure used to steer sampling: the running estimate, or the
    /// initial guess while the estimate is undefined.
    pub fn steering_f(&self) -> f64 {
        self.sums.f_measure(self.alpha).unwrap_or(self.initial_f)
    }

    /// Distribution over strata for the next draw.
    pub fn instrumental(&self) -> InstrumentalDist {
        let v_star = optimal_stratum_weights_unchecked(
            self.strata.weights(),
            self.strata.mean_predictions(),
            &self.model.means(),
            self.steering_f(),
            self.alpha,
        );
        mix(&v_star, self.strata.weights(), self.epsilon)
    }
}

impl Sampler for OasisSampler {
    fn strategy(&self) -> Strategy {
        Strategy::Oasis
    }

    fn propose(&mut self, _pool: &Pool) -> Draw {
        let v = self.instrumental().stratum_probs;
        let k = draw_index(&mut self.rng, &v);
        let members = self.strata.members(k);
        let pair_index = members[self.rng.random_range(0..members.len())];
        Draw { pair_index, stratum: Some(k), weight: self.strata.weights()[k] / v[k] }
    }

    fn observe(&mut self, pool: &Pool, draw: &Draw, label: bool) {
        let k = draw.stratum.expect("oasis draws carry a stratum");
        self.model.update(k, label);
        self.sums.add(draw.weight, label, pool.pair(draw.pair_index).predicted_label);
        self.iteration += 1;
    }

    fn estimate(&self) -> Option<f64> {
        self.sums.f_measure(self.alpha)
    }

    fn stratum_rates(&self) -> Option<Vec<f64>> {
        Some(self.model.means())
    }

    fn stratum_distribution(&self) -> Option<Vec<f64>> {
        Some(self.instrumental().stratum_probs)
    }
}
