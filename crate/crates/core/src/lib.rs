//! Label-efficient estimation of a binary matcher's F-measure over a large,
//! heavily imbalanced pool of record pairs.
//!
//! The centrepiece is [`sampler::OasisSampler`], an adaptive importance
//! sampler over score strata whose sampling distribution tracks the
//! variance-minimising one as labels arrive. Passive, proportional
//! stratified and static importance sampling baselines share the same
//! [`sampler::Sampler`] interface. [`harness`] replicates runs and
//! aggregates error curves against the label budget, and [`service`] drives
//! an OASIS run from labels supplied by a human.

pub mod bayes;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod instrumental;
pub mod oracle;
pub mod pool;
pub mod sampler;
pub mod service;
pub mod stratification;

pub use error::{Error, ErrorCategory, Result};
pub use oracle::{LabelLedger, Oracle, OracleKind};
pub use pool::{load_pool, PairRecord, Pool, PoolFormat};
pub use sampler::{run, RunTrace, SamplerConfig, Strategy};
pub use stratification::Strata;
