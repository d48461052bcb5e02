//! Experiment harness: TOML experiment configs, the `simulate` / `evaluate` /
//! `exponent` / `design` / `fig1` / `fig2` pipelines, CSV and SVG emission.

pub mod commands;
pub mod config;
pub mod plot;

pub use commands::{run, Command, Overrides};
pub use config::{Experiment, ExperimentConfig};

/// Short machine-readable class of an error, used in the CLI error line.
pub fn error_kind(err: &anyhow::Error) -> &'static str {
    use sdspred::Error::*;
    match err.downcast_ref::<sdspred::Error>() {
        Some(Config(_)) => "config",
        Some(DimensionMismatch { .. }) | Some(Contract(_)) | Some(Domain(_)) => "validation",
        Some(Unsupported(_)) => "unsupported",
        Some(Infeasible(_)) => "infeasible",
        Some(NonConvergence { .. }) => "non_convergence",
        Some(Diverged { .. }) => "diverged",
        Some(Inconsistent(_)) => "inconsistent",
        Some(Csv(_)) | Some(Io(_)) => "io",
        None if err.downcast_ref::<std::io::Error>().is_some() => "io",
        None => "internal",
    }
}
