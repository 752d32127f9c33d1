//! Per-stratum beta-Bernoulli model of oracle match rates.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::pool::Pool;
use crate::stratification::Strata;

/// Logistic map used to bring raw scores into `(0, 1)`.
pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Beta hyperparameters for every stratum.
///
/// Column `k` is `(gamma0, gamma1)`: pseudo-counts of matches and
/// non-matches. The prior part `eta * (pi0, 1 - pi0)` is kept apart from
/// the observed counts so the optional prior decay can rescale it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PosteriorMatrix {
    eta: f64,
    prior_pi: Vec<f64>,
    matches: Vec<u64>,
    non_matches: Vec<u64>,
    prior_decay: bool,
}

impl PosteriorMatrix {
    pub fn new(prior_pi: Vec<f64>, eta: f64, prior_decay: bool) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::param("eta", format!("must be positive, got {eta}")));
        }
        for &p in &prior_pi {
            crate::error::check_unit("prior_pi", p)?;
        }
        let k = prior_pi.len();
        Ok(PosteriorMatrix { eta, prior_pi, matches: vec![0; k], non_matches: vec![0; k], prior_decay })
    }

    pub fn len(&self) -> usize {
        self.prior_pi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prior_pi.is_empty()
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn prior_pi(&self) -> &[f64] {
        &self.prior_pi
    }

    pub fn prior_decay(&self) -> bool {
        self.prior_decay
    }

    /// Labels observed in stratum `k`.
    pub fn labels_in(&self, k: usize) -> u64 {
        self.matches[k] + self.non_matches[k]
    }

    /// `(gamma0, gamma1)` for stratum `k`.
    pub fn column(&self, k: usize) -> (f64, f64) {
        let n = self.labels_in(k);
        let scale = if self.prior_decay && n >= 1 { 1.0 / n as f64 } else { 1.0 };
        let pi = self.prior_pi[k];
        (
            self.eta * pi * scale + self.matches[k] as f64,
            self.eta * (1.0 - pi) * scale + self.non_matches[k] as f64,
        )
    }

    /// The full 2 x K matrix, row 0 matches and row 1 non-matches.
    pub fn gamma(&self) -> [Vec<f64>; 2] {
        let (g0, g1) = (0..self.len()).map(|k| self.column(k)).unzip();
        [g0, g1]
    }

    pub fn update(&mut self, k: usize, label: bool) {
        if label {
            self.matches[k] += 1;
        } else {
            self.non_matches[k] += 1;
        }
    }

    pub fn mean(&self, k: usize) -> f64 {
        let (g0, g1) = self.column(k);
        g0 / (g0 + g1)
    }

    /// Posterior means `gamma0 / (gamma0 + gamma1)` for all strata.
    pub fn means(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.mean(k)).collect()
    }
}

/// Match-rate guess per stratum from the scores: the stratum's mean score,
/// passed through the logistic of `(mean - tau)` when scores are raw.
pub fn prior_match_rates(pool: &Pool, strata: &Strata, tau: Option<f64>) -> Vec<f64> {
    let means = strata.mean_scores(pool);
    if pool.scores_are_probabilities() {
        means
    } else {
        let tau = tau.unwrap_or(0.0);
        means.into_iter().map(|m| logistic(m - tau)).collect()
    }
}

/// Plug-in F-measure from per-stratum match rates, mean predictions and
/// sizes. `None` when the denominator vanishes.
pub fn plug_in_f_measure(
    sizes: &[usize],
    match_rates: &[f64],
    mean_predictions: &[f64],
    alpha: f64,
) -> Option<f64> {
    let mut tp = 0.0;
    let mut predicted = 0.0;
    let mut actual = 0.0;
    for ((&n, &pi), &lam) in sizes.iter().zip(match_rates).zip(mean_predictions) {
        let n = n as f64;
        tp += n * pi * lam;
        predicted += n * lam;
        actual += n * pi;
    }
    let den = alpha * predicted + (1.0 - alpha) * actual;
    (den > 0.0).then(|| tp / den)
}

/// Builds the prior `eta * [pi0; 1 - pi0]` and the initial F-measure guess.
pub fn initialize_model(
    pool: &Pool,
    strata: &Strata,
    alpha: f64,
    tau: Option<f64>,
    eta: f64,
    prior_decay: bool,
) -> Result<(PosteriorMatrix, f64)> {
    crate::error::check_unit("alpha", alpha)?;
    if pool.scores_are_probabilities() {
        if let Some(bad) = pool.pairs().iter().find(|p| !(0.0..=1.0).contains(&p.score)) {
            return Err(Error::InconsistentScoreFlag { pair_id: bad.pair_id.clone(), score: bad.score });
        }
    }
    let pi0 = prior_match_rates(pool, strata, tau);
    let initial_f = plug_in_f_measure(&strata.sizes(), &pi0, strata.mean_predictions(), alpha)
        .ok_or(Error::UndefinedInitialF)?;
    let model = PosteriorMatrix::new(pi0, eta, prior_decay)?;
    Ok((model, initial_f))
}
