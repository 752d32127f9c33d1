use oasis_core::harness::{generate_synthetic_pool, subsample_pool, SyntheticSpec};

#[test]
fn calibrated_scores_match_decile_rates() {
    let pool = generate_synthetic_pool(&SyntheticSpec {
        n: 100_000,
        matches: 50_000,
        concentration: 2.0,
        seed: 31,
        ..SyntheticSpec::default()
    })
    .unwrap();
    let mut totals = [0usize; 10];
    let mut matches = [0usize; 10];
    for p in pool.pairs() {
        let d = ((p.score * 10.0) as usize).min(9);
        totals[d] += 1;
        matches[d] += usize::from(p.true_label.unwrap());
    }
    for d in 0..10 {
        assert!(totals[d] > 1000, "decile {d} has {} pairs", totals[d]);
        let rate = matches[d] as f64 / totals[d] as f64;
        let mid = (d as f64 + 0.5) / 10.0;
        assert!((rate - mid).abs() <= 0.05, "decile {d}: rate {rate}");
    }
}

#[test]
fn subsample_match_count_is_hypergeometric() {
    let spec = SyntheticSpec { n: 20_000, matches: 100, seed: 5, ..SyntheticSpec::default() };
    let pool = generate_synthetic_pool(&spec).unwrap();
    let target = 2_000;
    let (n, k, m) = (spec.n as f64, spec.matches as f64, target as f64);
    let expected = k * m / n;
    let var = m * (k / n) * (1.0 - k / n) * (n - m) / (n - 1.0);

    let seeds = 200;
    let counts: Vec<f64> = (0..seeds)
        .map(|seed| subsample_pool(&pool, target, seed).unwrap().match_count().unwrap() as f64)
        .collect();
    let mean = counts.iter().sum::<f64>() / seeds as f64;
    assert!((mean - expected).abs() <= 3.0 * (var / seeds as f64).sqrt(), "mean {mean} vs {expected}");
    let sample_var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (seeds - 1) as f64;
    assert!(sample_var > 0.5 * var && sample_var < 1.5 * var, "variance {sample_var} vs {var}");
}
