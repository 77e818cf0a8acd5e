//! Nitrogen response rate (NRR) prediction from simulated pasture data.
//!
//! The crate is organised along the pipeline:
//!
//! - [`surrogate`]: full-factorial scenario grid, synthetic daily weather and an
//!   analytic pasture-growth surrogate producing daily series and NRR labels.
//! - [`features`]: 28-day pre-fertilization windows, the 425-wide feature
//!   layout, weekly aggregates for the forest, year splits and standardization.
//! - [`nn`]: dense networks with skip links, losses, reverse-mode gradients,
//!   Adam/AdamW and finite-difference gradient checking.
//! - [`models`]: MLP, two-stage autoencoder and dual-head autoencoder training.
//! - [`forest`]: CART regression trees, bagged forests, k-fold CV and
//!   GP/expected-improvement hyperparameter search.
//! - [`eval`]: metrics, monthly residual candles, the operational gate and
//!   report files.

// Negated float comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod eval;
pub mod features;
pub mod forest;
pub mod models;
pub mod nn;
pub mod seeding;
pub mod surrogate;

mod csvutil;

pub use error::{Error, Result};
pub use eval::{GateVerdict, MetricsRow, MonthlyResidualStats, RunResult};
pub use features::{FeatureVector, Sample, SampleMeta, Scaler, SplitSpec};
pub use forest::{BoTrace, ForestModel, RfHyperparams};
pub use models::{ModelKind, NeuralModel, TrainLog};
pub use nn::{Matrix, Network};
pub use surrogate::{DailyRecord, Scenario, ScenarioGrid, SimulationResult, SiteConfig};
