//! Simulation engine and estimators for binary-outcome meta-analysis with
//! randomly sized studies.
//!
//! The crate generates two-arm 2x2 tables study by study, pools log odds
//! ratios under several heterogeneity estimators (DerSimonian-Laird,
//! Mandel-Paule, REML) plus a sample-size-weighted estimator, and measures
//! bias and interval coverage over large replicated sweeps. Study sample
//! sizes can be held constant or drawn per study from a truncated normal or
//! a uniform distribution whose spread scales with the target mean size.
//!
//! Replication streams are counter-based: every replication derives its own
//! ChaCha8 stream from (master seed, scenario, replication index), so sweeps
//! are reproducible bit for bit at any worker count.

pub mod datagen;
pub mod engine;
pub mod estimators;
pub mod quantile;
pub mod sizes;
pub mod stream;

pub use datagen::{Mechanism, Scenario, StudyData};
pub use engine::{
    GridConfig, PerformanceRecord, ReplicationEstimates, RunSettings, Tau2Plugin,
};
pub use estimators::{CorrectionPolicy, MetaEstimate, RemlEstimate, StudySummary};
pub use sizes::{SampleSizeSpec, SizeKind, SizeMoments};

/// Errors surfaced by scenario construction and the estimator kernels.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("size center must be at least 10, got {got}")]
    CenterTooSmall { got: u32 },
    #[error("probability must lie strictly inside (0, 1), got {0}")]
    InvalidProbability(f64),
    #[error("confidence level must lie strictly inside (0, 1), got {0}")]
    InvalidLevel(f64),
    #[error("variance parameter must be non-negative, got {0}")]
    NegativeVariance(f64),
    #[error("need at least {need} studies, got {got}")]
    TooFewStudies { need: usize, got: usize },
    #[error("uniform intercept band ({low:.5}, {high:.5}) leaves (0, 1)")]
    InterceptBandOutOfRange { low: f64, high: f64 },
    #[error("replication count must be at least {need}")]
    TooFewReplications { need: u64 },
    #[error("grid axis `{0}` is empty")]
    EmptyAxis(&'static str),
}
