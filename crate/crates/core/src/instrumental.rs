//! Variance-minimising instrumental distributions and epsilon-greedy mixing.

use serde::Serialize;

use crate::error::{check_unit, Error, Result};
use crate::pool::Pool;

pub const DEFAULT_EPSILON: f64 = 1e-3;

/// Unnormalised asymptotically optimal mass for a region with prediction
/// rate `lambda` and match probability `pi`, under F-measure guess `f`.
pub fn optimal_mass(lambda: f64, pi: f64, f: f64, alpha: f64) -> f64 {
    let unmatched_term = (1.0 - alpha) * (1.0 - lambda) * f * pi.sqrt();
    let af = alpha * f;
    let matched_term = lambda * (af * af * (1.0 - pi) + (1.0 - f) * (1.0 - f) * pi).sqrt();
    unmatched_term + matched_term
}

/// Stratum sampling distribution after epsilon-greedy mixing.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstrumentalDist {
    /// Mixed probabilities `v`.
    pub stratum_probs: Vec<f64>,
    /// Normalised optimal part `v*` before mixing.
    pub optimal_part: Vec<f64>,
    pub epsilon: f64,
}

fn normalise(mut raw: Vec<f64>) -> Option<Vec<f64>> {
    let total: f64 = raw.iter().sum();
    if total > 0.0 && total.is_finite() {
        raw.iter_mut().for_each(|x| *x /= total);
        Some(raw)
    } else {
        None
    }
}

/// Normalised stratified optimal distribution `v*`. Falls back to the
/// stratum weights when every raw term is zero.
pub fn optimal_stratum_weights(
    weights: &[f64],
    mean_predictions: &[f64],
    pi_hat: &[f64],
    f_hat: f64,
    alpha: f64,
) -> Result<Vec<f64>> {
    let k = weights.len();
    if mean_predictions.len() != k || pi_hat.len() != k {
        return Err(Error::param(
            "strata",
            format!(
                "length mismatch: {k} weights, {} mean predictions, {} match rates",
                mean_predictions.len(),
                pi_hat.len()
            ),
        ));
    }
    check_unit("f_hat", f_hat)?;
    check_unit("alpha", alpha)?;
    for i in 0..k {
        check_unit("weight", weights[i])?;
        check_unit("mean_prediction", mean_predictions[i])?;
        check_unit("pi_hat", pi_hat[i])?;
    }
    Ok(optimal_stratum_weights_unchecked(weights, mean_predictions, pi_hat, f_hat, alpha))
}

pub(crate) fn optimal_stratum_weights_unchecked(
    weights: &[f64],
    mean_predictions: &[f64],
    pi_hat: &[f64],
    f_hat: f64,
    alpha: f64,
) -> Vec<f64> {
    let raw = weights
        .iter()
        .zip(mean_predictions)
        .zip(pi_hat)
        .map(|((&w, &lam), &pi)| w * optimal_mass(lam, pi, f_hat, alpha))
        .collect();
    normalise(raw).unwrap_or_else(|| weights.to_vec())
}

/// `v = epsilon * weights + (1 - epsilon) * v*`.
pub fn epsilon_greedy(v_star: &[f64], weights: &[f64], epsilon: f64) -> Result<InstrumentalDist> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::param("epsilon", format!("must lie in (0, 1], got {epsilon}")));
    }
    if v_star.len() != weights.len() {
        return Err(Error::param("v_star", "length differs from weights"));
    }
    Ok(mix(v_star, weights, epsilon))
}

pub(crate) fn mix(v_star: &[f64], weights: &[f64], epsilon: f64) -> InstrumentalDist {
    let stratum_probs =
        v_star.iter().zip(weights).map(|(&vs, &w)| epsilon * w + (1.0 - epsilon) * vs).collect();
    InstrumentalDist { stratum_probs, optimal_part: v_star.to_vec(), epsilon }
}

/// Per-pair optimal distribution `q*(z)`, with `proxy_probs` standing in for
/// the unknown oracle probabilities.
pub fn pairwise_optimal_dist(pool: &Pool, proxy_probs: &[f64], f_guess: f64, alpha: f64) -> Result<Vec<f64>> {
    if proxy_probs.len() != pool.len() {
        return Err(Error::param("proxy_probs", "length differs from pool size"));
    }
    check_unit("f_guess", f_guess)?;
    check_unit("alpha", alpha)?;
    let mut raw = Vec::with_capacity(pool.len());
    for ((pair, &p), &mass) in pool.pairs().iter().zip(proxy_probs).zip(pool.marginal()) {
        check_unit("proxy_prob", p)?;
        let lambda = if pair.predicted_label { 1.0 } else { 0.0 };
        raw.push(mass * optimal_mass(lambda, p, f_guess, alpha));
    }
    normalise(raw).ok_or(Error::DegenerateDistribution)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pool::PairRecord;
    use proptest::prelude::*;

    // Frozen from an independent script evaluating the formula directly.
    const TWO_STRATUM: [f64; 2] = [0.11228770976294225, 0.8877122902370578];

    #[test]
    fn zero_rate_unpredicted_stratum_gets_no_mass() {
        assert_eq!(optimal_mass(0.0, 0.0, 0.7, 0.5), 0.0);
        let v = optimal_stratum_weights(&[0.5, 0.5], &[0.0, 1.0], &[0.0, 0.3], 0.7, 0.5).unwrap();
        assert_eq!(v[0], 0.0);
        assert_eq!(v[1], 1.0);
    }

    #[test]
    fn single_stratum_is_certain() {
        let v = optimal_stratum_weights(&[1.0], &[0.3], &[0.2], 0.4, 0.5).unwrap();
        assert_eq!(v, vec![1.0]);
    }

    #[test]
    fn two_stratum_hand_case() {
        let v = optimal_stratum_weights(&[0.5, 0.5], &[0.0, 1.0], &[0.04, 0.5], 0.5, 0.5).unwrap();
        for (a, b) in v.iter().zip(TWO_STRATUM) {
            assert!((a - b).abs() <= 1e-12 * b, "{a} vs {b}");
        }
    }

    #[test]
    fn all_zero_falls_back_to_weights() {
        let v = optimal_stratum_weights(&[0.25, 0.75], &[0.0, 0.0], &[0.3, 0.1], 0.0, 0.5).unwrap();
        assert_eq!(v, vec![0.25, 0.75]);
    }

    #[test]
    fn input_validation() {
        assert!(optimal_stratum_weights(&[0.5, 0.5], &[0.0], &[0.1, 0.1], 0.5, 0.5).is_err());
        assert!(matches!(
            optimal_stratum_weights(&[1.0], &[0.5], &[1.2], 0.5, 0.5),
            Err(Error::Domain { .. })
        ));
        assert!(optimal_stratum_weights(&[1.0], &[0.5], &[0.2], -0.1, 0.5).is_err());
    }

    #[test]
    fn mixing_examples() {
        let d = epsilon_greedy(&[0.2, 0.8], &[0.5, 0.5], 1.0).unwrap();
        assert_eq!(d.stratum_probs, vec![0.5, 0.5]);
        let d = epsilon_greedy(&[1.0, 0.0], &[0.5, 0.5], 0.001).unwrap();
        assert!((d.stratum_probs[0] - 0.9995).abs() < 1e-15);
        assert!((d.stratum_probs[1] - 0.0005).abs() < 1e-15);
        assert!(epsilon_greedy(&[1.0], &[1.0], 0.0).is_err());
    }

    #[test]
    fn pairwise_examples() {
        let pool = Pool::new(vec![PairRecord::new("a", 0.5, true), PairRecord::new("b", 0.04, false)], None)
            .unwrap();
        let q = pairwise_optimal_dist(&pool, &[0.5, 0.04], 0.5, 0.5).unwrap();
        assert!((q[0] - TWO_STRATUM[1]).abs() <= 1e-12);
        assert!((q[1] - TWO_STRATUM[0]).abs() <= 1e-12);

        let single = Pool::new(vec![PairRecord::new("a", 0.3, false)], None).unwrap();
        assert_eq!(pairwise_optimal_dist(&single, &[0.3], 0.5, 0.5).unwrap(), vec![1.0]);

        let dead = Pool::new(vec![PairRecord::new("a", 0.0, false), PairRecord::new("b", 0.0, false)], None)
            .unwrap();
        assert!(matches!(
            pairwise_optimal_dist(&dead, &[0.0, 0.0], 0.5, 0.5),
            Err(Error::DegenerateDistribution)
        ));
    }

    #[test]
    fn stratified_matches_aggregated_pairwise() {
        // Strata whose members share (prediction, proxy) reproduce the
        // pairwise distribution summed within each stratum.
        let spec = [(3usize, true, 0.6), (5, false, 0.05), (2, true, 0.2), (10, false, 0.0)];
        let mut pairs = Vec::new();
        let mut probs = Vec::new();
        for (s, &(n, pred, p)) in spec.iter().enumerate() {
            for i in 0..n {
                pairs.push(PairRecord::new(format!("{s}-{i}"), p, pred));
                probs.push(p);
            }
        }
        let pool = Pool::new(pairs, None).unwrap();
        let n_total = pool.len() as f64;
        let q = pairwise_optimal_dist(&pool, &probs, 0.45, 0.3).unwrap();
        let weights: Vec<f64> = spec.iter().map(|s| s.0 as f64 / n_total).collect();
        let lambdas: Vec<f64> = spec.iter().map(|s| if s.1 { 1.0 } else { 0.0 }).collect();
        let pis: Vec<f64> = spec.iter().map(|s| s.2).collect();
        let v = optimal_stratum_weights(&weights, &lambdas, &pis, 0.45, 0.3).unwrap();
        let mut start = 0;
        for (s, &(n, _, _)) in spec.iter().enumerate() {
            let agg: f64 = q[start..start + n].iter().sum();
            assert!((agg - v[s]).abs() < 1e-12);
            start += n;
        }
    }

    fn unit() -> impl Strategy<Value = f64> {
        0.0f64..=1.0
    }

    proptest! {
        #[test]
        fn scale_invariant_and_normalised(
            raw in prop::collection::vec((0.01f64..1.0, unit(), unit()), 1..12),
            f in unit(), alpha in unit(), c in 0.1f64..10.0,
        ) {
            let total: f64 = raw.iter().map(|r| r.0).sum();
            let w: Vec<f64> = raw.iter().map(|r| r.0 / total).collect();
            let lam: Vec<f64> = raw.iter().map(|r| r.1).collect();
            let pi: Vec<f64> = raw.iter().map(|r| r.2).collect();
            let v = optimal_stratum_weights(&w, &lam, &pi, f, alpha).unwrap();
            prop_assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(v.iter().all(|&x| x >= 0.0));

            let scaled: Vec<f64> = w.iter().map(|x| x * c).collect();
            let raw_terms: Vec<f64> = scaled.iter().zip(&lam).zip(&pi)
                .map(|((&w, &l), &p)| w * optimal_mass(l, p, f, alpha)).collect();
            if let Some(vs) = normalise(raw_terms) {
                for (a, b) in vs.iter().zip(&v) {
                    prop_assert!((a - b).abs() < 1e-12);
                }
            }

            let eps = 1e-3;
            let d = epsilon_greedy(&v, &w, eps).unwrap();
            prop_assert!((d.stratum_probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            for (p, wk) in d.stratum_probs.iter().zip(&w) {
                prop_assert!(*p >= eps * wk * (1.0 - 1e-12));
            }
        }
    }
}
