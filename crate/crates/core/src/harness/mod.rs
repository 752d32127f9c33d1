//! Batch experiments: synthetic pools, replicated runs, error curves
//! against the label budget and the KL diagnostic.

pub mod diagnostics;
pub mod experiment;
pub mod metrics;
pub mod synthetic;

pub use diagnostics::{kl_at_budget, kl_divergence, kl_to_optimal, true_optimum, KlPoint, TrueOptimum};
pub use experiment::{
    run_experiment, run_experiment_on, write_report, ExperimentReport, ExperimentSpec, OracleChoice,
    PoolSource, StrategyReport,
};
pub use metrics::{write_metrics, BudgetCurve, MetricRow, MetricSeries};
pub use synthetic::{generate_synthetic_pool, subsample_pool, ScoreModel, SyntheticSpec};
