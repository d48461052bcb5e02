//! Experiment config files (TOML). See `configs/` and the README for the schema.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use sdspred::config::{NoiseConfig, PartitionConfig, PredictorDescriptor};
use sdspred::designer::DesignProblem;
use sdspred::metrics::{EvalConfig, DEFAULT_TRAJECTORIES};
use sdspred::sds::random_dynamics_matrix;
use sdspred::{Error, GridPartition, PredictorSpec, Result, SystemModel};

/// `f` is either a row-major matrix or `"random(seed, spectral_radius)"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DynamicsSpec {
    Matrix(Vec<f64>),
    Descriptor(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub f: DynamicsSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    pub sigma: Option<f64>,
    /// Support cap `N`; defaults to `3σ`.
    pub cap: Option<f64>,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// One-step radius.
    #[serde(default = "default_radius")]
    pub r: f64,
}

fn default_resolution() -> usize {
    10_000
}
fn default_tolerance() -> f64 {
    1e-6
}
fn default_radius() -> f64 {
    0.1
}
fn default_seed() -> u64 {
    1
}
fn default_n_traj() -> usize {
    DEFAULT_TRAJECTORIES
}
fn default_fig_trajectories() -> usize {
    3
}
fn default_sweep() -> Vec<f64> {
    vec![0.0, 0.5, 1.0, 1.5]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub eps: f64,
    pub horizon: usize,
    #[serde(default = "default_n_traj")]
    pub n_traj: usize,
    /// Monte-Carlo budget; the library default when absent.
    pub budget: Option<usize>,
    #[serde(default)]
    pub predictor: PredictorDescriptor,
    pub output_dir: Option<PathBuf>,
    /// Common initial state; otherwise drawn per trajectory.
    pub initial_state: Option<Vec<f64>>,
    /// Trajectories per curve in `fig1`/`fig2`.
    #[serde(default = "default_fig_trajectories")]
    pub fig_trajectories: usize,
    #[serde(default = "default_sweep")]
    pub tau_sweep: Vec<f64>,
    #[serde(default = "default_sweep")]
    pub eta_sweep: Vec<f64>,
    pub system: SystemConfig,
    pub noise: NoiseConfig,
    pub partition: Option<PartitionConfig>,
    pub design: Option<DesignConfig>,
}

/// A config resolved into models.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub system: SystemModel,
    pub predictor: PredictorSpec,
    pub partition: Option<GridPartition>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) {
            return Err(Error::Config(format!("eps must be positive, got {}", self.eps)));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if self.n_traj == 0 || self.fig_trajectories == 0 {
            return Err(Error::Config("trajectory counts must be at least 1".into()));
        }
        Ok(())
    }

    pub fn eval_config(&self) -> EvalConfig {
        let mut c = EvalConfig::new(self.eps, self.horizon, self.n_traj, self.seed);
        if let Some(b) = self.budget {
            c = c.with_budget(b);
        }
        c.initial_state = self.initial_state.clone();
        c
    }

    pub fn design_problem(&self, noise_dim_variance: Option<f64>) -> Result<(DesignProblem, f64)> {
        let d = self.design.clone().unwrap_or(DesignConfig {
            sigma: None,
            cap: None,
            resolution: default_resolution(),
            tolerance: default_tolerance(),
            r: default_radius(),
        });
        let sigma = match (d.sigma, noise_dim_variance) {
            (Some(s), _) => s,
            (None, Some(v)) => v.sqrt(),
            (None, None) => {
                return Err(Error::Config("design needs design.sigma or 1-D noise".into()))
            }
        };
        let mut p = DesignProblem::new(sigma)
            .with_resolution(d.resolution)
            .with_tolerance(d.tolerance);
        if let Some(cap) = d.cap {
            p = p.with_cap(cap);
        }
        Ok((p, d.r))
    }

    pub fn build(&self) -> Result<Experiment> {
        self.validate()?;
        let noise = self.noise.to_model()?;
        let d = noise.dim();
        let f = match &self.system.f {
            DynamicsSpec::Matrix(v) => {
                if v.len() != d * d {
                    return Err(Error::Config(format!(
                        "system.f has {} entries, noise dimension is {d}",
                        v.len()
                    )));
                }
                nalgebra::DMatrix::from_row_slice(d, d, v)
            }
            DynamicsSpec::Descriptor(s) => {
                let (seed, radius) = parse_random(s)?;
                random_dynamics_matrix(d, radius, seed)?
            }
        };
        let system = SystemModel::linear(f, noise)?;
        if let Some(x0) = &self.initial_state {
            if x0.len() != d {
                return Err(Error::Config(format!("initial_state must have {d} entries")));
            }
        }
        let predictor = self.predictor.build(&system)?;
        let partition = match &self.partition {
            Some(p) => Some(p.resolve(system.noise())?),
            None => None,
        };
        Ok(Experiment { config: self.clone(), system, predictor, partition })
    }
}

fn parse_random(s: &str) -> Result<(u64, f64)> {
    let bad = || Error::Config(format!("system.f must be a matrix or random(seed, radius), got '{s}'"));
    let inner = s
        .trim()
        .strip_prefix("random(")
        .and_then(|r| r.strip_suffix(')'))
        .ok_or_else(bad)?;
    let (a, b) = inner.split_once(',').ok_or_else(bad)?;
    let seed = a.trim().parse().map_err(|_| bad())?;
    let radius: f64 = b.trim().parse().map_err(|_| bad())?;
    if !(radius >= 0.0) {
        return Err(bad());
    }
    Ok((seed, radius))
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
eps = 0.1
horizon = 50
[system]
f = "random(3, 0.9)"
[noise]
kind = "gaussian"
mean = [0.0, 0.0]
cov = [1.0, 0.0, 0.0, 1.0]
"#;

    #[test]
    fn defaults_and_build() {
        let c = ExperimentConfig::from_toml(BASE).unwrap();
        assert_eq!(c.seed, 1);
        assert_eq!(c.n_traj, 200);
        assert_eq!(c.predictor, PredictorDescriptor::Optimal);
        let e = c.build().unwrap();
        assert_eq!(e.system.dim(), 2);
        let back = ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn invalid_configs() {
        assert!(ExperimentConfig::from_toml(&BASE.replace("eps = 0.1", "eps = -1")).is_err());
        assert!(ExperimentConfig::from_toml(&BASE.replace("horizon = 50", "horizon = 0")).is_err());
        let c = ExperimentConfig::from_toml(&BASE.replace("random(3, 0.9)", "chaos")).unwrap();
        assert!(matches!(c.build(), Err(Error::Config(_))));
        let c = ExperimentConfig::from_toml(&BASE.replace("f = \"random(3, 0.9)\"", "f = [1.0]")).unwrap();
        assert!(c.build().is_err());
    }
}
