//! Label sources and label-budget accounting.
//!
//! Every oracle is wrapped by a ledger that caches the first label observed
//! for each pair. Repeat queries are answered from the cache and are free;
//! the label budget counts distinct pairs only.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pool::Pool;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OracleKind {
    /// Returns `true_label`.
    Deterministic,
    /// Draws `Bernoulli(true_match_prob)` once per pair.
    Noisy { seed: u64 },
    /// Labels are supplied from outside (a human via the service).
    External,
}

/// Cache of observed labels keyed by pool index, plus the distinct-label
/// count.
#[derive(Debug, Clone, Default)]
pub struct LabelLedger {
    cache: HashMap<usize, bool>,
}

impl LabelLedger {
    pub fn get(&self, pair_index: usize) -> Option<bool> {
        self.cache.get(&pair_index).copied()
    }

    pub fn distinct_labels_used(&self) -> usize {
        self.cache.len()
    }

    fn record(&mut self, pair_index: usize, label: bool) -> bool {
        *self.cache.entry(pair_index).or_insert(label)
    }
}

#[derive(Debug, Clone)]
pub struct Oracle {
    kind: OracleKind,
    ledger: LabelLedger,
    rng: Option<ChaCha8Rng>,
    supplied: Option<(usize, bool)>,
}

impl Oracle {
    pub fn new(kind: OracleKind) -> Self {
        let rng = match kind {
            OracleKind::Noisy { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
            _ => None,
        };
        Oracle { kind, ledger: LabelLedger::default(), rng, supplied: None }
    }

    pub fn kind(&self) -> OracleKind {
        self.kind
    }

    pub fn ledger(&self) -> &LabelLedger {
        &self.ledger
    }

    pub fn budget(&self) -> usize {
        self.ledger.distinct_labels_used()
    }

    /// Hands the external oracle the answer for its next query.
    pub fn supply(&mut self, pair_index: usize, label: bool) {
        self.supplied = Some((pair_index, label));
    }

    /// Label for pool pair `pair_index`. Cached pairs return their first
    /// label without touching the underlying source.
    pub fn query(&mut self, pool: &Pool, pair_index: usize) -> Result<bool> {
        if let Some(label) = self.ledger.get(pair_index) {
            return Ok(label);
        }
        let pair = pool.pair(pair_index);
        let label = match self.kind {
            OracleKind::Deterministic => pair.true_label.ok_or_else(|| Error::OracleCapability {
                pair_id: pair.pair_id.clone(),
                reason: "deterministic oracle needs true_label",
            })?,
            OracleKind::Noisy { .. } => {
                let p = pair.true_match_prob.ok_or_else(|| Error::OracleCapability {
                    pair_id: pair.pair_id.clone(),
                    reason: "noisy oracle needs true_match_prob",
                })?;
                let rng = self.rng.as_mut().expect("noisy oracle owns an rng");
                rng.random::<f64>() < p
            }
            OracleKind::External => match self.supplied.take() {
                Some((i, label)) if i == pair_index => label,
                other => {
                    self.supplied = other;
                    return Err(Error::NoLabeller(pair.pair_id.clone()));
                }
            },
        };
        Ok(self.ledger.record(pair_index, label))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pool::PairRecord;
    use proptest::prelude::*;

    fn pool(pairs: Vec<PairRecord>) -> Pool {
        Pool::new(pairs, None).unwrap()
    }

    #[test]
    fn deterministic_repeat_is_free() {
        let p = pool(vec![PairRecord::new("a", 0.9, true).with_truth(true)]);
        let mut oracle = Oracle::new(OracleKind::Deterministic);
        assert!(oracle.query(&p, 0).unwrap());
        assert!(oracle.query(&p, 0).unwrap());
        assert_eq!(oracle.budget(), 1);
    }

    #[test]
    fn missing_fields_are_capability_errors() {
        let p = pool(vec![PairRecord::new("a", 0.9, true)]);
        let err = Oracle::new(OracleKind::Deterministic).query(&p, 0).unwrap_err();
        assert!(matches!(err, Error::OracleCapability { .. }));
        let err = Oracle::new(OracleKind::Noisy { seed: 1 }).query(&p, 0).unwrap_err();
        assert!(matches!(err, Error::OracleCapability { .. }));
    }

    #[test]
    fn noisy_zero_probability_is_always_zero() {
        let pairs =
            (0..100).map(|i| PairRecord::new(format!("p{i}"), 0.5, true).with_match_prob(0.0)).collect();
        let p = pool(pairs);
        let mut oracle = Oracle::new(OracleKind::Noisy { seed: 3 });
        for i in 0..100 {
            assert!(!oracle.query(&p, i).unwrap());
        }
    }

    #[test]
    fn noisy_frequency_matches_probability() {
        let pairs =
            (0..10_000).map(|i| PairRecord::new(format!("p{i}"), 0.5, true).with_match_prob(0.7)).collect();
        let p = pool(pairs);
        let mut oracle = Oracle::new(OracleKind::Noisy { seed: 2024 });
        let hits = (0..10_000).filter(|&i| oracle.query(&p, i).unwrap()).count();
        let frac = hits as f64 / 10_000.0;
        assert!((frac - 0.7).abs() <= 0.015, "frac {frac}");
        assert_eq!(oracle.budget(), 10_000);
    }

    #[test]
    fn external_needs_a_supplied_label() {
        let p = pool(vec![PairRecord::new("a", 0.9, true), PairRecord::new("b", 0.1, false)]);
        let mut oracle = Oracle::new(OracleKind::External);
        assert!(matches!(oracle.query(&p, 0), Err(Error::NoLabeller(_))));
        oracle.supply(1, true);
        assert!(matches!(oracle.query(&p, 0), Err(Error::NoLabeller(_))));
        assert!(oracle.query(&p, 1).unwrap());
        // cached afterwards, no labeller needed
        assert!(oracle.query(&p, 1).unwrap());
        assert_eq!(oracle.budget(), 1);
    }

    proptest! {
        #[test]
        fn cache_is_idempotent(seq in prop::collection::vec(0usize..20, 1..200), seed in any::<u64>()) {
            let pairs = (0..20)
                .map(|i| PairRecord::new(format!("p{i}"), 0.5, true).with_match_prob(0.5))
                .collect();
            let p = pool(pairs);
            let mut oracle = Oracle::new(OracleKind::Noisy { seed });
            let mut first: HashMap<usize, bool> = HashMap::new();
            let mut last_budget = 0;
            for &i in &seq {
                let label = oracle.query(&p, i).unwrap();
                prop_assert_eq!(*first.entry(i).or_insert(label), label);
                prop_assert!(oracle.budget() >= last_budget);
                prop_assert!(oracle.budget() <= p.len());
                last_budget = oracle.budget();
            }
            prop_assert_eq!(oracle.budget(), first.len());
        }
    }
}
