//! Prediction-performance analysis for stochastic dynamical systems
//! `x_{k+1} = f(x_k, u_k) + w_k`.
//!
//! The crate is organised bottom-up:
//!
//! * [`noise`] — noise laws with densities, sampling, ε-box masses and entropies.
//! * [`partition`] — grid partitions, label functions and discrete distributions.
//! * [`sds`] — system and observation models, seeded trajectory simulation.
//! * [`predictors`] — predictors described by their per-step output law.
//! * [`metrics`] — trajectory and expected prediction rates, discrete evaluation,
//!   predictability-exponent approximation, concentration bounds.
//! * [`designer`] — maximum-entropy noise design and the one-step value.
//! * [`config`] / [`export`] — plain-text config blocks and CSV writers.

pub mod config;
pub mod designer;
pub mod error;
pub mod export;
pub mod metrics;
pub mod noise;
pub mod partition;
pub mod predictors;
pub mod rng;
pub mod sds;
mod special;

pub use error::{Error, Result};
pub use noise::{BoxMass, NoiseModel};
pub use partition::{DiscreteDist, GridPartition};
pub use predictors::{OutputLaw, PredictorSpec};
pub use sds::{ObservationModel, SystemModel, Trajectory};
