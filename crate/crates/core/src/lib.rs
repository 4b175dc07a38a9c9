//! Classify version-control commits into the three maintenance activities
//! — corrective, perfective and adaptive — from their commit messages and
//! from fine-grained source-code change counts.
//!
//! The crate is organized as a pipeline:
//!
//! * [`corpus`] — labeled commit datasets: CSV/JSONL ingest and export,
//!   stratified holdout splitting, patch-series replay.
//! * [`distill`] — source code to change counts: a lightweight
//!   curly-brace parser, a tree differencer, and a 48-type change
//!   taxonomy.
//! * [`textnorm`] — commit messages to keyword features: tokenizing,
//!   stopword removal, stemming, keyword vocabularies.
//! * [`learners`] — decision trees, random forests and gradient boosting,
//!   trained from scratch and fully deterministic given a seed.
//! * [`compound`] — the two-component classifier that routes each commit
//!   by whether its message contains vocabulary keywords.
//! * [`metrics`] — confusion matrices, agreement statistics, significance
//!   tests, and repeated stratified cross-validation.
//!
//! Numeric routines are generic over the floating-point scalar via
//! [`Real`]; `f64` is used throughout unless stated otherwise.

#![forbid(unsafe_code)]

pub mod compound;
pub mod corpus;
pub mod distill;
pub mod learners;
pub mod metrics;
mod scalar;
pub mod textnorm;

pub use scalar::Real;

// Concrete `f64` instantiations of the generic types, for callers that
// don't care about the scalar parameter.
pub type TreeParams = learners::TreeParams<f64>;
pub type TreeModel = learners::TreeModel<f64>;
pub type ForestModel = learners::ForestModel<f64>;
pub type BoostParams = learners::BoostParams<f64>;
pub type BoostModel = learners::BoostModel<f64>;
pub type ClassScores = learners::ClassScores<f64>;
pub type Algorithm = compound::Algorithm<f64>;
pub type CompoundSpec = compound::CompoundSpec<f64>;
pub type CompoundModel = compound::CompoundModel<f64>;
pub type Component = compound::Component<f64>;
pub type EvaluationReport = metrics::EvaluationReport<f64>;
pub type Resample = metrics::Resample<f64>;
pub type ResampleSummary = metrics::ResampleSummary<f64>;
pub type SixNumber = metrics::SixNumber<f64>;

pub use learners::ForestParams;
