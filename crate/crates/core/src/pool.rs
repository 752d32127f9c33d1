//! Record-pair pool: the finite population whose F-measure is estimated.
//!
//! A pool arrives pre-scored. Each pair carries the matcher's raw similarity
//! score and its predicted label, and optionally ground truth for simulated
//! oracles. Pools are immutable once built and may be shared read-only
//! between concurrent sampler runs.

use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::f_measure_from_counts;

pub const COL_PAIR_ID: &str = "pair_id";
pub const COL_SCORE: &str = "score";
pub const COL_PREDICTED: &str = "predicted_label";
pub const COL_TRUE_LABEL: &str = "true_label";
pub const COL_TRUE_PROB: &str = "true_match_prob";

/// One candidate record pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub pair_id: String,
    pub score: f64,
    #[serde(with = "binary")]
    pub predicted_label: bool,
    #[serde(default, with = "opt_binary", skip_serializing_if = "Option::is_none")]
    pub true_label: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_match_prob: Option<f64>,
}

impl PairRecord {
    pub fn new(pair_id: impl Into<String>, score: f64, predicted_label: bool) -> Self {
        PairRecord {
            pair_id: pair_id.into(),
            score,
            predicted_label,
            true_label: None,
            true_match_prob: None,
        }
    }

    pub fn with_truth(mut self, label: bool) -> Self {
        self.true_label = Some(label);
        self
    }

    pub fn with_match_prob(mut self, p: f64) -> Self {
        self.true_match_prob = Some(p);
        self
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if !self.score.is_finite() {
            return Err(format!("score {} is not finite", self.score));
        }
        if let Some(p) = self.true_match_prob {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("true_match_prob {p} lies outside [0, 1]"));
            }
        }
        Ok(())
    }
}

/// The pool of scored, predicted record pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Pool {
    pairs: Vec<PairRecord>,
    marginal: Vec<f64>,
    scores_are_probabilities: bool,
}

impl Pool {
    /// Validates `pairs` and builds a pool with the uniform marginal.
    ///
    /// `scores_are_probabilities = None` infers the flag: it is set when
    /// every score lies in `[0, 1]`.
    pub fn new(pairs: Vec<PairRecord>, scores_are_probabilities: Option<bool>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::EmptyPool);
        }
        let mut seen = HashSet::with_capacity(pairs.len());
        for (i, pair) in pairs.iter().enumerate() {
            pair.validate().map_err(|message| Error::InvalidRow { row: i as u64 + 1, message })?;
            if !seen.insert(pair.pair_id.as_str()) {
                return Err(Error::DuplicatePairId(pair.pair_id.clone()));
            }
        }
        let in_unit = |p: &PairRecord| (0.0..=1.0).contains(&p.score);
        let flag = match scores_are_probabilities {
            Some(true) => {
                if let Some(bad) = pairs.iter().find(|p| !in_unit(p)) {
                    return Err(Error::InconsistentScoreFlag {
                        pair_id: bad.pair_id.clone(),
                        score: bad.score,
                    });
                }
                true
            }
            Some(false) => false,
            None => pairs.iter().all(in_unit),
        };
        let n = pairs.len();
        Ok(Pool { pairs, marginal: vec![1.0 / n as f64; n], scores_are_probabilities: flag })
    }

    /// Replaces the uniform marginal with an arbitrary mass function.
    pub fn with_marginal(mut self, marginal: Vec<f64>) -> Result<Self> {
        if marginal.len() != self.pairs.len() {
            return Err(Error::param(
                "marginal",
                format!("length {} != pool size {}", marginal.len(), self.pairs.len()),
            ));
        }
        if marginal.iter().any(|m| !m.is_finite() || *m < 0.0) {
            return Err(Error::param("marginal", "masses must be finite and nonnegative"));
        }
        let total: f64 = marginal.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::param("marginal", format!("masses sum to {total}, not 1")));
        }
        self.marginal = marginal;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[PairRecord] {
        &self.pairs
    }

    pub fn pair(&self, index: usize) -> &PairRecord {
        &self.pairs[index]
    }

    pub fn marginal(&self) -> &[f64] {
        &self.marginal
    }

    pub fn is_uniform(&self) -> bool {
        let u = 1.0 / self.len() as f64;
        self.marginal.iter().all(|&m| m == u)
    }

    pub fn scores_are_probabilities(&self) -> bool {
        self.scores_are_probabilities
    }

    pub fn index_of(&self, pair_id: &str) -> Option<usize> {
        self.pairs.iter().position(|p| p.pair_id == pair_id)
    }

    pub fn has_ground_truth(&self) -> bool {
        self.pairs.iter().all(|p| p.true_label.is_some())
    }

    pub fn match_count(&self) -> Option<usize> {
        self.pairs.iter().map(|p| p.true_label.map(usize::from)).sum()
    }

    /// Exhaustive F-measure over the whole pool, using `true_label`.
    pub fn true_f_measure(&self, alpha: f64) -> Result<f64> {
        crate::error::check_unit("alpha", alpha)?;
        let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
        for pair in &self.pairs {
            let truth = pair.true_label.ok_or_else(|| Error::IncompleteGroundTruth(pair.pair_id.clone()))?;
            match (truth, pair.predicted_label) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                (false, false) => {}
            }
        }
        f_measure_from_counts(tp as f64, fp as f64, fn_ as f64, alpha).ok_or(Error::UndefinedMeasure)
    }

    /// F-measure with `true_match_prob` in place of hard labels, the target
    /// of a noisy oracle.
    pub fn expected_f_measure(&self, alpha: f64) -> Result<f64> {
        crate::error::check_unit("alpha", alpha)?;
        let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
        for pair in &self.pairs {
            let p = pair.true_match_prob.ok_or_else(|| Error::IncompleteGroundTruth(pair.pair_id.clone()))?;
            if pair.predicted_label {
                tp += p;
                fp += 1.0 - p;
            } else {
                fn_ += p;
            }
        }
        f_measure_from_counts(tp, fp, fn_, alpha).ok_or(Error::UndefinedMeasure)
    }
}

/// Text-format options for pool files.
#[derive(Debug, Clone, Copy)]
pub struct PoolFormat {
    pub delimiter: u8,
    /// `None` infers the flag from the score range.
    pub scores_are_probabilities: Option<bool>,
}

impl Default for PoolFormat {
    fn default() -> Self {
        PoolFormat { delimiter: b',', scores_are_probabilities: None }
    }
}

pub fn load_pool(path: impl AsRef<Path>, format: &PoolFormat) -> Result<Pool> {
    read_pool(File::open(path)?, format)
}

pub fn read_pool<R: Read>(reader: R, format: &PoolFormat) -> Result<Pool> {
    let mut rdr =
        csv::ReaderBuilder::new().delimiter(format.delimiter).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let column = |name: &str| headers.iter().position(|h| h == name);
    let required = |name: &str| column(name).ok_or_else(|| Error::MissingColumn(name.to_string()));
    let id_col = required(COL_PAIR_ID)?;
    let score_col = required(COL_SCORE)?;
    let pred_col = required(COL_PREDICTED)?;
    let truth_col = column(COL_TRUE_LABEL);
    let prob_col = column(COL_TRUE_PROB);

    let mut pairs = Vec::new();
    let mut seen = HashSet::new();
    for record in rdr.records() {
        let record = record?;
        let row = record.position().map_or(0, |p| p.line());
        let bad = |message: String| Error::InvalidRow { row, message };
        let field = |col: usize| record.get(col).unwrap_or("");

        let pair_id = field(id_col).to_string();
        let score: f64 = field(score_col)
            .parse()
            .map_err(|_| bad(format!("score `{}` is not a number", field(score_col))))?;
        let predicted_label = parse_binary(field(pred_col))
            .ok_or_else(|| bad(format!("predicted_label `{}` is not 0 or 1", field(pred_col))))?;
        let true_label = match truth_col.map(field).filter(|s| !s.is_empty()) {
            None => None,
            Some(s) => Some(parse_binary(s).ok_or_else(|| bad(format!("true_label `{s}` is not 0 or 1")))?),
        };
        let true_match_prob = match prob_col.map(field).filter(|s| !s.is_empty()) {
            None => None,
            Some(s) => {
                Some(s.parse::<f64>().map_err(|_| bad(format!("true_match_prob `{s}` is not a number")))?)
            }
        };
        if !seen.insert(pair_id.clone()) {
            return Err(Error::DuplicatePairId(pair_id));
        }
        let pair = PairRecord { pair_id, score, predicted_label, true_label, true_match_prob };
        pair.validate().map_err(bad)?;
        pairs.push(pair);
    }
    Pool::new(pairs, format.scores_are_probabilities)
}

fn parse_binary(s: &str) -> Option<bool> {
    match s {
        "0" => Some(false),
        "1" => Some(true),
        _ => None,
    }
}

/// Writes the pool in the same column layout `read_pool` accepts. Optional
/// columns are emitted only when at least one pair populates them.
pub fn write_pool<W: Write>(pool: &Pool, writer: W, delimiter: u8) -> Result<()> {
    let has_truth = pool.pairs.iter().any(|p| p.true_label.is_some());
    let has_prob = pool.pairs.iter().any(|p| p.true_match_prob.is_some());
    let mut wtr = csv::WriterBuilder::new().delimiter(delimiter).from_writer(writer);

    let mut header = vec![COL_PAIR_ID, COL_SCORE, COL_PREDICTED];
    if has_truth {
        header.push(COL_TRUE_LABEL);
    }
    if has_prob {
        header.push(COL_TRUE_PROB);
    }
    wtr.write_record(&header)?;

    let bit = |b: bool| if b { "1" } else { "0" };
    for p in &pool.pairs {
        let mut row = vec![p.pair_id.clone(), p.score.to_string(), bit(p.predicted_label).to_string()];
        if has_truth {
            row.push(p.true_label.map(|b| bit(b).to_string()).unwrap_or_default());
        }
        if has_prob {
            row.push(p.true_match_prob.map(|x| x.to_string()).unwrap_or_default());
        }
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn save_pool(pool: &Pool, path: impl AsRef<Path>) -> Result<()> {
    write_pool(pool, File::create(path)?, b',')
}

// Labels travel as 0/1 integers in JSON payloads.
pub(crate) mod binary {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(u8::from(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match i64::deserialize(d)? {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(D::Error::custom(format!("expected 0 or 1, got {other}"))),
        }
    }
}

mod opt_binary {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<bool>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(b) => s.serialize_some(&u8::from(*b)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<bool>, D::Error> {
        match Option::<i64>::deserialize(d)? {
            None => Ok(None),
            Some(0) => Ok(Some(false)),
            Some(1) => Ok(Some(true)),
            Some(other) => Err(D::Error::custom(format!("expected 0 or 1, got {other}"))),
        }
    }
}
