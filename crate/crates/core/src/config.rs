//! TOML config blocks for noise models, partitions and predictors.
//!
//! Matrices are row-major flat arrays.
//!
//! ```toml
//! [noise]
//! kind = "gaussian"
//! mean = [0.0, 0.0]
//! cov = [1.0, 0.0, 0.0, 1.0]
//! ```

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::NoiseModel;
use crate::partition::{DiscreteDist, GridPartition};
use crate::predictors::{mismatched_gaussian_predictor, optimal_predictor, PredictorSpec};
use crate::sds::{random_covariance, SystemModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseConfig {
    Gaussian {
        mean: Vec<f64>,
        cov: Vec<f64>,
    },
    UniformBox {
        center: Vec<f64>,
        half_widths: Vec<f64>,
    },
    /// Weights over the bounded cells in row-major cell order.
    GridDensity {
        lower: Vec<f64>,
        upper: Vec<f64>,
        cell_width: Vec<f64>,
        weights: Vec<f64>,
    },
    /// Gaussian with covariance `AAᵀ` rescaled to the given spectral radius.
    RandomGaussian {
        dim: usize,
        seed: u64,
        #[serde(default = "one")]
        spectral_radius: f64,
        #[serde(default)]
        mean: Option<Vec<f64>>,
    },
}

fn one() -> f64 {
    1.0
}

pub(crate) fn square_matrix(flat: &[f64], what: &str) -> Result<DMatrix<f64>> {
    let d = (flat.len() as f64).sqrt().round() as usize;
    if d == 0 || d * d != flat.len() {
        return Err(Error::Config(format!("{what} has {} entries, not a square matrix", flat.len())));
    }
    Ok(DMatrix::from_row_slice(d, d, flat))
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    (0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)])).collect()
}

impl NoiseConfig {
    pub fn to_model(&self) -> Result<NoiseModel> {
        match self {
            NoiseConfig::Gaussian { mean, cov } => {
                NoiseModel::gaussian(mean.clone(), square_matrix(cov, "cov")?)
            }
            NoiseConfig::UniformBox { center, half_widths } => {
                NoiseModel::uniform_box(center.clone(), half_widths.clone())
            }
            NoiseConfig::GridDensity { lower, upper, cell_width, weights } => {
                let p = GridPartition::new(lower.clone(), upper.clone(), cell_width.clone())?;
                if weights.len() != p.bounded_cells() {
                    return Err(Error::Config(format!(
                        "grid_density needs {} weights, got {}",
                        p.bounded_cells(),
                        weights.len()
                    )));
                }
                let mut w = weights.clone();
                w.push(0.0);
                let dist = DiscreteDist::on_partition(w, &p)?;
                NoiseModel::grid_density(p, dist)
            }
            NoiseConfig::RandomGaussian { dim, seed, spectral_radius, mean } => {
                let cov = random_covariance(*dim, *spectral_radius, *seed)?;
                let mean = mean.clone().unwrap_or_else(|| vec![0.0; *dim]);
                NoiseModel::gaussian(mean, cov)
            }
        }
    }

    pub fn from_model(model: &NoiseModel) -> Self {
        match model {
            NoiseModel::Gaussian(g) => NoiseConfig::Gaussian {
                mean: g.mean().to_vec(),
                cov: row_major(g.covariance()),
            },
            NoiseModel::UniformBox(u) => NoiseConfig::UniformBox {
                center: u.center().to_vec(),
                half_widths: u.half_widths().to_vec(),
            },
            NoiseModel::GridDensity(g) => {
                let p = g.partition();
                NoiseConfig::GridDensity {
                    lower: p.origin().to_vec(),
                    upper: p.upper(),
                    cell_width: p.cell_width().to_vec(),
                    weights: g.weights().weights()[..p.bounded_cells()].to_vec(),
                }
            }
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Grid partition block. Without bounds the grid is fitted to the noise law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionConfig {
    pub cell_width: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<Vec<f64>>,
}

impl PartitionConfig {
    pub fn from_partition(p: &GridPartition) -> Result<Self> {
        let w = p.cell_width();
        if w.iter().any(|x| *x != w[0]) {
            return Err(Error::Unsupported("partition block needs equal cell widths".into()));
        }
        Ok(Self { cell_width: w[0], lower: Some(p.origin().to_vec()), upper: Some(p.upper()) })
    }

    pub fn resolve(&self, model: &NoiseModel) -> Result<GridPartition> {
        match (&self.lower, &self.upper) {
            (Some(lo), Some(hi)) => GridPartition::cubic(lo.clone(), hi.clone(), self.cell_width),
            (None, None) => GridPartition::for_model(model, self.cell_width),
            _ => Err(Error::Config("partition needs both lower and upper, or neither".into())),
        }
    }
}

/// `optimal | mismatch(tau, eta) | deterministic(p1, ..., pd)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PredictorDescriptor {
    Optimal,
    Mismatch { tau: f64, eta: f64 },
    Deterministic(Vec<f64>),
}

impl Default for PredictorDescriptor {
    fn default() -> Self {
        Self::Optimal
    }
}

impl PredictorDescriptor {
    pub fn build(&self, system: &SystemModel) -> Result<PredictorSpec> {
        match self {
            PredictorDescriptor::Optimal => Ok(optimal_predictor(system)),
            PredictorDescriptor::Mismatch { tau, eta } => mismatched_gaussian_predictor(system, *tau, *eta),
            PredictorDescriptor::Deterministic(p) => {
                crate::error::check_dim(system.dim(), p.len())?;
                Ok(PredictorSpec::deterministic(p.clone()))
            }
        }
    }
}

fn parse_args(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|a| {
            a.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad number '{}' in predictor", a.trim())))
        })
        .collect()
}

impl FromStr for PredictorDescriptor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "optimal" {
            return Ok(Self::Optimal);
        }
        let (name, rest) = s
            .split_once('(')
            .ok_or_else(|| Error::Config(format!("unknown predictor '{s}'")))?;
        let args = rest
            .strip_suffix(')')
            .ok_or_else(|| Error::Config(format!("unclosed predictor '{s}'")))?;
        match name.trim() {
            "mismatch" => match parse_args(args)?[..] {
                [tau, eta] => Ok(Self::Mismatch { tau, eta }),
                _ => Err(Error::Config("mismatch takes (tau, eta)".into())),
            },
            "deterministic" => Ok(Self::Deterministic(parse_args(args)?)),
            other => Err(Error::Config(format!("unknown predictor '{other}'"))),
        }
    }
}

impl fmt::Display for PredictorDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Optimal => f.write_str("optimal"),
            Self::Mismatch { tau, eta } => write!(f, "mismatch({tau:?}, {eta:?})"),
            Self::Deterministic(p) => {
                let parts: Vec<String> = p.iter().map(|v| format!("{v:?}")).collect();
                write!(f, "deterministic({})", parts.join(", "))
            }
        }
    }
}

impl TryFrom<String> for PredictorDescriptor {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<PredictorDescriptor> for String {
    fn from(p: PredictorDescriptor) -> String {
        p.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_blocks_round_trip() {
        let models = [
            NoiseModel::gaussian(vec![0.5, -1.0], DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0])).unwrap(),
            NoiseModel::uniform_box(vec![0.0], vec![1.7]).unwrap(),
        ];
        for m in models {
            let text = NoiseConfig::from_model(&m).to_toml().unwrap();
            let back = NoiseConfig::from_toml(&text).unwrap().to_model().unwrap();
            assert_eq!(back, m);
        }
    }

    #[test]
    fn grid_density_block() {
        let text = "kind = \"grid_density\"\nlower = [-1.0]\nupper = [1.0]\ncell_width = [0.5]\nweights = [0.1, 0.4, 0.4, 0.1]\n";
        let m = NoiseConfig::from_toml(text).unwrap().to_model().unwrap();
        assert_eq!(NoiseConfig::from_toml(&NoiseConfig::from_model(&m).to_toml().unwrap()).unwrap().to_model().unwrap(), m);
        let bad = text.replace("0.1, 0.4, 0.4, 0.1", "0.5, 0.5");
        assert!(matches!(NoiseConfig::from_toml(&bad).unwrap().to_model(), Err(Error::Config(_))));
    }

    #[test]
    fn random_gaussian_block_has_unit_radius() {
        let c = NoiseConfig::from_toml("kind = \"random_gaussian\"\ndim = 3\nseed = 9\n").unwrap();
        let m = c.to_model().unwrap();
        let r = crate::sds::spectral_radius(&m.covariance());
        assert!((r - 1.0).abs() < 1e-12);
        assert_eq!(c.to_model().unwrap(), m);
    }

    #[test]
    fn bad_blocks_are_config_errors() {
        assert!(matches!(NoiseConfig::from_toml("kind = \"cauchy\""), Err(Error::Config(_))));
        let c = NoiseConfig::Gaussian { mean: vec![0.0], cov: vec![1.0, 0.0] };
        assert!(matches!(c.to_model(), Err(Error::Config(_))));
    }

    #[test]
    fn predictor_descriptors() {
        assert_eq!("optimal".parse::<PredictorDescriptor>().unwrap(), PredictorDescriptor::Optimal);
        assert_eq!(
            "mismatch(0.5, 1)".parse::<PredictorDescriptor>().unwrap(),
            PredictorDescriptor::Mismatch { tau: 0.5, eta: 1.0 }
        );
        let d: PredictorDescriptor = "deterministic(0.1, -2)".parse().unwrap();
        assert_eq!(d, PredictorDescriptor::Deterministic(vec![0.1, -2.0]));
        assert_eq!(d.to_string().parse::<PredictorDescriptor>().unwrap(), d);
        for bad in ["kalman", "mismatch(1)", "mismatch(1, x)", "mismatch(1, 2"] {
            assert!(bad.parse::<PredictorDescriptor>().is_err(), "{bad}");
        }
    }

    #[test]
    fn partition_block() {
        let m = NoiseModel::standard_gaussian(1, 1.0).unwrap();
        let p = PartitionConfig { cell_width: 0.1, lower: None, upper: None }.resolve(&m).unwrap();
        let back = PartitionConfig::from_partition(&p).unwrap().resolve(&m).unwrap();
        assert_eq!(back.counts(), p.counts());
        assert!(PartitionConfig { cell_width: 0.1, lower: Some(vec![0.0]), upper: None }.resolve(&m).is_err());
    }
}
