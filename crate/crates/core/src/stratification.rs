//! Partitioning a pool into score-homogeneous strata.
//!
//! The cumulative square-root-of-frequency (CSF) method histograms the
//! scores, accumulates `sqrt(count)` across bins, and cuts that cumulative
//! scale into equal-width pieces. Heavy, low-score regions end up in a few
//! large strata and the sparse high-score tail in many small ones.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::pool::Pool;

pub const DEFAULT_STRATA: usize = 30;
pub const DEFAULT_HISTOGRAM_BINS: usize = 1000;

/// A partition of the pool into `K` nonempty strata, numbered `0..K` in
/// ascending score order.
#[derive(Debug, Clone, PartialEq)]
pub struct Strata {
    allocations: Vec<usize>,
    members: Vec<Vec<usize>>,
    weights: Vec<f64>,
    mean_predictions: Vec<f64>,
    bin_edges: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratumSummary {
    pub index: usize,
    pub size: usize,
    pub weight: f64,
    pub mean_score: f64,
    pub mean_prediction: f64,
}

impl Strata {
    /// Builds strata from per-pair raw stratum ids that are ordered by score.
    /// Unused ids are dropped and the rest renumbered contiguously.
    /// `raw_edges[i]..raw_edges[i + 1]` is the score interval of raw id `i`.
    fn from_raw(pool: &Pool, raw: &[usize], raw_edges: &[f64]) -> Strata {
        let raw_k = raw_edges.len() - 1;
        let mut counts = vec![0usize; raw_k];
        for &r in raw {
            counts[r] += 1;
        }
        let mut renumber = vec![usize::MAX; raw_k];
        let mut bin_edges = vec![raw_edges[0]];
        let mut k = 0;
        for r in 0..raw_k {
            if counts[r] > 0 {
                renumber[r] = k;
                k += 1;
                // An emptied stratum's interval folds into its lower neighbour.
                if k > 1 {
                    bin_edges.push(raw_edges[r]);
                }
            }
        }
        bin_edges.push(raw_edges[raw_k]);

        let allocations: Vec<usize> = raw.iter().map(|&r| renumber[r]).collect();
        let mut members = vec![Vec::new(); k];
        for (i, &s) in allocations.iter().enumerate() {
            members[s].push(i);
        }
        let n = pool.len() as f64;
        let weights = members.iter().map(|m| m.len() as f64 / n).collect();
        let mean_predictions = members
            .iter()
            .map(|m| {
                let hits = m.iter().filter(|&&i| pool.pair(i).predicted_label).count();
                hits as f64 / m.len() as f64
            })
            .collect();
        Strata { allocations, members, weights, mean_predictions, bin_edges }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Stratum index of every pair, aligned with the pool.
    pub fn allocations(&self) -> &[usize] {
        &self.allocations
    }

    pub fn stratum_of(&self, pair_index: usize) -> usize {
        self.allocations[pair_index]
    }

    /// Pool indices belonging to stratum `k`, in pool order.
    pub fn members(&self, k: usize) -> &[usize] {
        &self.members[k]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }

    /// `|P_k| / N`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Fraction of predicted matches in each stratum.
    pub fn mean_predictions(&self) -> &[f64] {
        &self.mean_predictions
    }

    /// `K + 1` ascending score boundaries.
    pub fn bin_edges(&self) -> &[f64] {
        &self.bin_edges
    }

    /// Mean score per stratum.
    pub fn mean_scores(&self, pool: &Pool) -> Vec<f64> {
        self.members
            .iter()
            .map(|m| m.iter().map(|&i| pool.pair(i).score).sum::<f64>() / m.len() as f64)
            .collect()
    }

    /// One row per stratum, for debug dumps.
    pub fn describe(&self, pool: &Pool) -> Vec<StratumSummary> {
        self.mean_scores(pool)
            .into_iter()
            .enumerate()
            .map(|(k, mean_score)| StratumSummary {
                index: k,
                size: self.members[k].len(),
                weight: self.weights[k],
                mean_score,
                mean_prediction: self.mean_predictions[k],
            })
            .collect()
    }
}

fn check_params(pool: &Pool, desired_k: usize) -> Result<()> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    if desired_k < 1 {
        return Err(Error::param("desired_strata", "must be at least 1"));
    }
    Ok(())
}

/// Cumulative sqrt(F) stratification with an `bins`-bin equal-width score
/// histogram over `[min score, max score]`.
///
/// Bins are left-closed and right-open except the last, which is closed.
/// A stratum boundary is placed at the right edge of the first histogram
/// bin whose cumulative sqrt-count reaches the next multiple of
/// `csf_total / desired_k`; at most one boundary is placed per bin, so the
/// returned `K` may fall short of `desired_k`.
pub fn csf_stratify(pool: &Pool, desired_k: usize, bins: usize) -> Result<Strata> {
    check_params(pool, desired_k)?;
    if bins < 1 {
        return Err(Error::param("histogram_bins", "must be at least 1"));
    }
    let (lo, hi) = pool
        .pairs()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.score), hi.max(p.score)));
    if lo == hi {
        return Ok(Strata::from_raw(pool, &vec![0; pool.len()], &[lo, hi]));
    }

    let width = (hi - lo) / bins as f64;
    let hist_edges: Vec<f64> =
        (0..=bins).map(|b| if b == bins { hi } else { lo + b as f64 * width }).collect();
    // Bin membership is decided against the same edges that are reported.
    let interior = &hist_edges[1..bins];
    let score_bin: Vec<usize> =
        pool.pairs().iter().map(|p| interior.partition_point(|&e| e <= p.score)).collect();
    let mut counts = vec![0u64; bins];
    for &b in &score_bin {
        counts[b] += 1;
    }
    let csf: Vec<f64> = counts
        .iter()
        .scan(0.0, |acc, &c| {
            *acc += (c as f64).sqrt();
            Some(*acc)
        })
        .collect();
    let csf_width = csf[bins - 1] / desired_k as f64;

    // `cuts` holds histogram-bin indices at which a new stratum starts.
    let mut cuts: Vec<usize> = Vec::new();
    let mut k = 1;
    for (j, &c) in csf.iter().enumerate() {
        if k == desired_k || j == bins - 1 {
            break;
        }
        if c >= k as f64 * csf_width {
            cuts.push(j + 1);
            k += 1;
        }
    }

    let mut raw_edges = vec![lo];
    raw_edges.extend(cuts.iter().map(|&b| hist_edges[b]));
    raw_edges.push(hi);
    let raw: Vec<usize> = score_bin.iter().map(|&b| cuts.partition_point(|&cut| cut <= b)).collect();
    Ok(Strata::from_raw(pool, &raw, &raw_edges))
}

/// Sorts pairs by score (ties by pool order) and splits them into
/// `min(desired_k, N)` contiguous groups whose sizes differ by at most one,
/// larger groups first.
pub fn equal_size_stratify(pool: &Pool, desired_k: usize) -> Result<Strata> {
    check_params(pool, desired_k)?;
    let n = pool.len();
    let k = desired_k.min(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| pool.pair(a).score.total_cmp(&pool.pair(b).score));

    let base = n / k;
    let extra = n % k;
    let mut raw = vec![0usize; n];
    let mut edges = Vec::with_capacity(k + 1);
    let mut start = 0;
    for s in 0..k {
        let size = base + usize::from(s < extra);
        edges.push(pool.pair(order[start]).score);
        for &i in &order[start..start + size] {
            raw[i] = s;
        }
        start += size;
    }
    edges.push(pool.pair(order[n - 1]).score);
    Ok(Strata::from_raw(pool, &raw, &edges))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pool::PairRecord;
    use proptest::prelude::*;

    fn pool_of(scores: &[f64]) -> Pool {
        let pairs =
            scores.iter().enumerate().map(|(i, &s)| PairRecord::new(format!("p{i}"), s, s > 0.5)).collect();
        Pool::new(pairs, None).unwrap()
    }

    #[test]
    fn identical_scores_give_one_stratum() {
        let pool = pool_of(&[0.3; 8]);
        let strata = csf_stratify(&pool, 5, 100).unwrap();
        assert_eq!(strata.len(), 1);
        assert_eq!(strata.weights(), &[1.0]);
    }

    #[test]
    fn golden_trace_small_histogram() {
        // counts (4, 1, 1) over 3 bins: csf = [2, 3, 4], width 2, so the
        // only interior boundary sits after the first bin.
        let pool = pool_of(&[0.1, 0.1, 0.1, 0.1, 0.5, 0.9]);
        let strata = csf_stratify(&pool, 2, 3).unwrap();
        assert_eq!(strata.sizes(), vec![4, 2]);
        assert_eq!(strata.allocations(), &[0, 0, 0, 0, 1, 1]);
        let edges = strata.bin_edges();
        assert_eq!(edges.len(), 3);
        assert_eq!(edges[0], 0.1);
        assert!((edges[1] - (0.1 + 0.8 / 3.0)).abs() < 1e-12);
        assert_eq!(edges[2], 0.9);
        assert_eq!(strata.mean_predictions(), &[0.0, 0.5]);
    }

    #[test]
    fn empty_strata_are_removed() {
        // Many boundaries land in the empty gap between the two clusters.
        let mut scores = vec![0.0; 50];
        scores.extend(std::iter::repeat_n(1.0, 50));
        let pool = pool_of(&scores);
        let strata = csf_stratify(&pool, 10, 10).unwrap();
        assert_eq!(strata.len(), 2);
        assert_eq!(strata.sizes(), vec![50, 50]);
    }

    #[test]
    fn parameter_errors() {
        let pool = pool_of(&[0.1, 0.2]);
        assert!(csf_stratify(&pool, 0, 10).is_err());
        assert!(csf_stratify(&pool, 2, 0).is_err());
        assert!(equal_size_stratify(&pool, 0).is_err());
    }

    #[test]
    fn equal_size_examples() {
        let six = pool_of(&[0.6, 0.5, 0.4, 0.3, 0.2, 0.1]);
        assert_eq!(equal_size_stratify(&six, 3).unwrap().sizes(), vec![2, 2, 2]);
        let seven = pool_of(&[0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1]);
        assert_eq!(equal_size_stratify(&seven, 3).unwrap().sizes(), vec![3, 2, 2]);
        let five = pool_of(&[0.5, 0.1, 0.3, 0.2, 0.4]);
        let s = equal_size_stratify(&five, 5).unwrap();
        assert_eq!(s.allocations(), &[4, 0, 2, 1, 3]);
    }

    fn heavy_tailed(seed: u64, n: usize) -> Vec<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                // Pareto-like tail on [0, 1).
                1.0 - (1.0 - u).powf(0.08)
            })
            .collect()
    }

    fn mean_within_variance(pool: &Pool, alloc: &[usize], k: usize) -> f64 {
        let mut sum = vec![0.0; k];
        let mut sq = vec![0.0; k];
        let mut cnt = vec![0.0; k];
        for (i, &s) in alloc.iter().enumerate() {
            let x = pool.pair(i).score;
            sum[s] += x;
            sq[s] += x * x;
            cnt[s] += 1.0;
        }
        let n: f64 = cnt.iter().sum();
        (0..k).filter(|&s| cnt[s] > 0.0).map(|s| sq[s] - sum[s] * sum[s] / cnt[s]).sum::<f64>() / n
    }

    #[test]
    fn csf_beats_random_contiguous_split() {
        use rand::{Rng, SeedableRng};
        let trials = 50;
        let mut wins = 0;
        for seed in 0..trials {
            let scores = heavy_tailed(seed, 2000);
            let pool = pool_of(&scores);
            let strata = csf_stratify(&pool, 10, 200).unwrap();
            let k = strata.len();
            let csf_var = mean_within_variance(&pool, strata.allocations(), k);

            // Random contiguous split of the sorted scores into the same K.
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1000 + seed);
            let mut order: Vec<usize> = (0..pool.len()).collect();
            order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
            let mut cuts: Vec<usize> = (0..k - 1).map(|_| rng.random_range(1..pool.len())).collect();
            cuts.sort_unstable();
            let mut alloc = vec![0; pool.len()];
            for (rank, &i) in order.iter().enumerate() {
                alloc[i] = cuts.partition_point(|&c| c <= rank);
            }
            let rand_var = mean_within_variance(&pool, &alloc, k);
            if csf_var <= rand_var {
                wins += 1;
            }
        }
        assert!(wins as f64 >= 0.9 * trials as f64, "csf won {wins}/{trials}");
    }

    proptest! {
        #[test]
        fn csf_invariants(scores in prop::collection::vec(-5.0f64..5.0, 1..200), k in 1usize..40, m in 1usize..300) {
            let pool = pool_of(&scores);
            let strata = csf_stratify(&pool, k, m.max(k)).unwrap();
            prop_assert!(strata.len() <= k);
            prop_assert!(strata.sizes().iter().all(|&s| s > 0));
            prop_assert_eq!(strata.sizes().iter().sum::<usize>(), pool.len());
            prop_assert!((strata.weights().iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let edges = strata.bin_edges();
            prop_assert!(edges.windows(2).all(|w| w[0] <= w[1]));
            for (i, p) in pool.pairs().iter().enumerate() {
                let s = strata.stratum_of(i);
                prop_assert!(p.score >= edges[s] && p.score <= edges[s + 1]);
                for (j, q) in pool.pairs().iter().enumerate() {
                    if p.score < q.score {
                        prop_assert!(s <= strata.stratum_of(j));
                    }
                }
            }
            for (k, &lam) in strata.mean_predictions().iter().enumerate() {
                let members = strata.members(k);
                let hits = members.iter().filter(|&&i| pool.pair(i).predicted_label).count();
                prop_assert_eq!(lam, hits as f64 / members.len() as f64);
            }
            prop_assert_eq!(csf_stratify(&pool, k, m.max(k)).unwrap(), strata);
        }

        #[test]
        fn equal_size_balanced(scores in prop::collection::vec(0.0f64..1.0, 1..100), k in 1usize..20) {
            let pool = pool_of(&scores);
            let strata = equal_size_stratify(&pool, k).unwrap();
            let sizes = strata.sizes();
            prop_assert_eq!(sizes.len(), k.min(pool.len()));
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }
    }
}
