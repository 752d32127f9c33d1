use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pool::{PairRecord, Pool};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScoreModel {
    /// Scores in `[0, 1]` that equal the match probability.
    #[default]
    Calibrated,
    /// Unbounded scores, a scaled logit of the calibrated ones.
    Raw,
}

impl std::str::FromStr for ScoreModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "calibrated" => Ok(ScoreModel::Calibrated),
            "raw" => Ok(ScoreModel::Raw),
            other => Err(Error::param("score_model", format!("expected calibrated or raw, got `{other}`"))),
        }
    }
}

/// Parameters of the synthetic pool generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n: usize,
    pub matches: usize,
    pub score_model: ScoreModel,
    /// Standard deviation of the Gaussian noise added to calibrated scores
    /// before thresholding them at 0.5 into predictions.
    pub noise: f64,
    /// `a + b` of the underlying score distribution; larger values squeeze
    /// scores towards the match rate and make them less informative.
    pub concentration: f64,
    /// Slope applied to the logit for raw scores. Values other than one
    /// leave the logistic of the raw score miscalibrated.
    pub raw_scale: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n: 20_000,
            matches: 100,
            score_model: ScoreModel::Calibrated,
            noise: 0.05,
            concentration: 1.0,
            raw_scale: 0.25,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    /// Non-matches per match.
    pub fn imbalance_ratio(&self) -> f64 {
        (self.n - self.matches) as f64 / self.matches as f64
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::param("n", "must be positive"));
        }
        if self.matches == 0 || self.matches > self.n {
            return Err(Error::param("matches", format!("must lie in 1..={}, got {}", self.n, self.matches)));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::param("noise", "must be a nonnegative number"));
        }
        if !(self.concentration > 0.0 && self.concentration.is_finite()) {
            return Err(Error::param("concentration", "must be positive"));
        }
        if !(self.raw_scale > 0.0 && self.raw_scale.is_finite()) {
            return Err(Error::param("raw_scale", "must be positive"));
        }
        Ok(())
    }
}

const LOGIT_CLAMP: f64 = 1e-12;

fn beta(a: f64, b: f64) -> Result<Beta<f64>> {
    Beta::new(a, b).map_err(|e| Error::param("concentration", e.to_string()))
}

/// Synthetic pool with exactly `spec.matches` true matches.
///
/// With `p = matches / n` and `c = concentration`, matches draw their
/// calibrated score from `Beta(cp + 1, c(1 - p))` and non-matches from
/// `Beta(cp, c(1 - p) + 1)`. The mixture is `Beta(cp, c(1 - p))` and the
/// match probability given score `s` is exactly `s`.
pub fn generate_synthetic_pool(spec: &SyntheticSpec) -> Result<Pool> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let p = spec.matches as f64 / spec.n as f64;
    let a = spec.concentration * p;
    let b = spec.concentration * (1.0 - p);
    let match_scores = beta(a + 1.0, b)?;
    let nonmatch_scores = beta(a, b + 1.0)?;

    let mut labels = vec![false; spec.n];
    labels[..spec.matches].fill(true);
    labels.shuffle(&mut rng);

    let pairs = labels
        .into_iter()
        .enumerate()
        .map(|(i, is_match)| {
            let s: f64 =
                if is_match { match_scores.sample(&mut rng) } else { nonmatch_scores.sample(&mut rng) };
            let jitter: f64 = rng.sample(StandardNormal);
            let predicted = s + spec.noise * jitter > 0.5;
            let score = match spec.score_model {
                ScoreModel::Calibrated => s,
                ScoreModel::Raw => {
                    let c = s.clamp(LOGIT_CLAMP, 1.0 - LOGIT_CLAMP);
                    spec.raw_scale * (c / (1.0 - c)).ln()
                }
            };
            PairRecord::new(format!("z{i}"), score, predicted).with_truth(is_match).with_match_prob(s)
        })
        .collect();
    Pool::new(pairs, Some(spec.score_model == ScoreModel::Calibrated))
}

/// Uniform random subset of `target` pairs, drawn without replacement and
/// kept in pool order. The marginal of the result is uniform.
pub fn subsample_pool(pool: &Pool, target: usize, seed: u64) -> Result<Pool> {
    if target == 0 || target > pool.len() {
        return Err(Error::param("target", format!("must lie in 1..={}, got {target}", pool.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, pool.len(), target).into_vec();
    picked.sort_unstable();
    let pairs = picked.into_iter().map(|i| pool.pair(i).clone()).collect();
    Pool::new(pairs, Some(pool.scores_are_probabilities()))
}
