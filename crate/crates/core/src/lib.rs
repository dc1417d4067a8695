//! State-of-charge estimation for LFP cells.
//!
//! The estimator identifies a second-order linear model over a sliding
//! window of filtered voltage and current, inverts a hysteresis-aware OCV map
//! and weights the result by its Cramér-Rao bound before fusing it with
//! Coulomb counting. A UKF baseline, a synthetic plant and a scenario harness
//! sit alongside it.

// `!(a > b)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cell_sim;
pub mod condition_eval;
pub mod error;
pub mod fusion;
pub mod hysteresis;
mod linalg;
pub mod metrics;
pub mod ocv_map;
pub mod param_estimation;
pub mod pipeline;
pub mod report;
pub mod scenario;
pub mod signal_filter;
pub mod ukf;

pub use error::{Result, SocError};
pub use ocv_map::OcvMap;
pub use pipeline::{EstimateRecord, Pipeline, PipelineConfig, TelemetrySample};
pub use scenario::{run_scenario, Scenario, ScenarioName, ScenarioReport};
