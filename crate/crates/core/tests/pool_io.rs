use oasis_core::pool::{read_pool, save_pool};
use oasis_core::{load_pool, Error, ErrorCategory, Oracle, OracleKind, PairRecord, Pool, PoolFormat};

fn five_rows() -> Pool {
    let pairs = vec![
        PairRecord::new("a", 0.95, true).with_truth(true).with_match_prob(0.9),
        PairRecord::new("b", 0.80, true).with_truth(false).with_match_prob(0.6),
        PairRecord::new("c", 0.40, false).with_match_prob(0.3),
        PairRecord::new("d", 0.10, false).with_truth(true).with_match_prob(0.2),
        PairRecord::new("e", 0.02, false).with_truth(false).with_match_prob(0.01),
    ];
    Pool::new(pairs, None).unwrap()
}

#[test]
fn round_trip_keeps_missing_truth() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pool.csv");
    let pool = five_rows();
    save_pool(&pool, &path).unwrap();
    let loaded = load_pool(&path, &PoolFormat::default()).unwrap();

    assert_eq!(loaded.pairs(), pool.pairs());
    assert!(loaded.scores_are_probabilities());
    assert!(!loaded.has_ground_truth());
    assert_eq!(loaded.marginal(), &[0.2; 5]);

    let mut oracle = Oracle::new(OracleKind::Deterministic);
    assert!(oracle.query(&loaded, 0).unwrap());
    let c = loaded.index_of("c").unwrap();
    let err = oracle.query(&loaded, c).unwrap_err();
    assert_eq!(err.category(), ErrorCategory::Oracle);
    assert!(matches!(loaded.true_f_measure(0.5), Err(Error::IncompleteGroundTruth(id)) if id == "c"));

    // Every row carries a match probability, so the noisy oracle still works.
    let mut noisy = Oracle::new(OracleKind::Noisy { seed: 1 });
    for i in 0..loaded.len() {
        noisy.query(&loaded, i).unwrap();
    }
    assert_eq!(noisy.budget(), 5);
}

#[test]
fn optional_columns_may_be_absent() {
    let text = "score,pair_id,predicted_label\n3.5,x,1\n-1.25,y,0\n";
    let pool = read_pool(text.as_bytes(), &PoolFormat::default()).unwrap();
    assert_eq!(pool.len(), 2);
    assert!(!pool.scores_are_probabilities());
    assert_eq!(pool.pair(0).true_label, None);
    assert_eq!(pool.pair(1).true_match_prob, None);
}

#[test]
fn raw_scores_cannot_be_declared_probabilities() {
    let text = "pair_id,score,predicted_label\nx,3.5,1\n";
    let format = PoolFormat { scores_are_probabilities: Some(true), ..PoolFormat::default() };
    let err = read_pool(text.as_bytes(), &format).unwrap_err();
    assert_eq!(err.category(), ErrorCategory::Input);
}
