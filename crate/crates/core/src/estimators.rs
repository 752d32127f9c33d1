//! F-measure estimators.
//!
//! Undefined estimates (zero denominators) are reported as `None`, never as
//! zero or NaN.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::stratification::Strata;

/// `TP / (alpha (TP + FP) + (1 - alpha)(TP + FN))`.
pub fn f_measure_from_counts(tp: f64, fp: f64, fn_: f64, alpha: f64) -> Option<f64> {
    let den = alpha * (tp + fp) + (1.0 - alpha) * (tp + fn_);
    (den > 0.0).then(|| tp / den)
}

/// `alpha = 1 / (1 + beta^2)`.
pub fn alpha_from_beta(beta: f64) -> f64 {
    1.0 / (1.0 + beta * beta)
}

/// Importance-weighted sums: `Σ w ℓ ℓ̂`, `Σ w ℓ̂` and `Σ w ℓ`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct WeightedSums {
    pub true_positive: f64,
    pub predicted: f64,
    pub actual: f64,
}

impl WeightedSums {
    pub fn add(&mut self, weight: f64, label: bool, prediction: bool) {
        if label && prediction {
            self.true_positive += weight;
        }
        if prediction {
            self.predicted += weight;
        }
        if label {
            self.actual += weight;
        }
    }

    pub fn f_measure(&self, alpha: f64) -> Option<f64> {
        let den = alpha * self.predicted + (1.0 - alpha) * self.actual;
        (den > 0.0).then(|| self.true_positive / den)
    }

    pub fn precision(&self) -> Option<f64> {
        self.f_measure(1.0)
    }

    pub fn recall(&self) -> Option<f64> {
        self.f_measure(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistoryEntry {
    pub t: usize,
    pub pair_id: String,
    pub weight: f64,
    pub label: bool,
    pub prediction: bool,
    pub stratum: Option<usize>,
}

/// Ordered record of weighted, labelled samples with running sums.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SampleHistory {
    entries: Vec<HistoryEntry>,
    sums: WeightedSums,
}

impl SampleHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(
        &mut self,
        pair_id: impl Into<String>,
        weight: f64,
        label: bool,
        prediction: bool,
        stratum: Option<usize>,
    ) {
        self.sums.add(weight, label, prediction);
        self.entries.push(HistoryEntry {
            t: self.entries.len() + 1,
            pair_id: pair_id.into(),
            weight,
            label,
            prediction,
            stratum,
        });
    }

    pub fn entries(&self) -> &[HistoryEntry] {
        &self.entries
    }

    pub fn sums(&self) -> WeightedSums {
        self.sums
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Importance-weighted F-measure over a history.
pub fn ais_f_estimate(history: &SampleHistory, alpha: f64) -> Option<f64> {
    history.sums.f_measure(alpha)
}

/// `(1/T) Σ w_t f(x_t)`.
pub fn ais_mean_estimate(values: &[f64], weights: &[f64]) -> Result<f64> {
    if values.len() != weights.len() {
        return Err(Error::param("weights", "length differs from values"));
    }
    if values.is_empty() {
        return Err(Error::param("values", "need at least one sample"));
    }
    let total: f64 = values.iter().zip(weights).map(|(f, w)| f * w).sum();
    Ok(total / values.len() as f64)
}

/// Per-stratum sample counts for the stratified estimator.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct StratumTally {
    pub draws: u64,
    pub matches: u64,
    pub predicted: u64,
    pub true_positives: u64,
}

impl StratumTally {
    pub fn add(&mut self, label: bool, prediction: bool) {
        self.draws += 1;
        self.matches += u64::from(label);
        self.predicted += u64::from(prediction);
        self.true_positives += u64::from(label && prediction);
    }

    /// Empirical match rate, if the stratum has been sampled.
    pub fn match_rate(&self) -> Option<f64> {
        (self.draws > 0).then(|| self.matches as f64 / self.draws as f64)
    }
}

/// Stratified F-measure: TP, predicted-positive and actual-positive totals
/// are each estimated as `Σ |P_k| * (stratum sample proportion)`.
/// Unsampled strata contribute nothing.
pub fn stratified_f_estimate(tallies: &[StratumTally], strata: &Strata, alpha: f64) -> Option<f64> {
    let mut sums = WeightedSums::default();
    for (t, size) in tallies.iter().zip(strata.sizes()) {
        if t.draws == 0 {
            continue;
        }
        let scale = size as f64 / t.draws as f64;
        sums.true_positive += scale * t.true_positives as f64;
        sums.predicted += scale * t.predicted as f64;
        sums.actual += scale * t.matches as f64;
    }
    sums.f_measure(alpha)
}
