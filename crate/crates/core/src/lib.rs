//! Ordering the per-amplifier gain and tilt updates of an optical line so
//! that the Q-factor of live traffic never dips during reconfiguration.
//!
//! The crate bundles a closed-form link model used as ground truth, a small
//! neural-network digital twin trained on it, a genetic search over step
//! orders and an experiment harness with a random-order baseline.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f64`.

// `!(x > 0.0)` style checks are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod digital_twin;
pub mod error;
pub mod ga;
pub mod harness;
pub mod link_model;
pub mod reconfig;
pub mod scalar;

pub use error::{Error, Result};
pub use ga::{brute_force_best, optimize, pmx, GaParams, GaResult};
pub use link_model::{ChannelPlan, LinkOracle, LinkSpec, OAConfig, QVector};
pub use reconfig::{fitness, trajectory, QualityModel, ReconfigOrder, TransitionScenario};
pub use scalar::Scalar;

pub type QVector64 = link_model::QVector<f64>;
pub type Mlp = digital_twin::MlpModel<f64>;
pub type Mlp32 = digital_twin::MlpModel<f32>;
pub type Dataset64 = digital_twin::Dataset<f64>;
pub type Trajectory64 = reconfig::Trajectory<f64>;
pub type Fitness = reconfig::FitnessValue<f64>;
pub type GaResult64 = ga::GaResult<f64>;
