//! System model `x_{k+1} = f(x_k, u_k) + w_k`, observation model and seeded
//! trajectory generation.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};
use crate::noise::{Gaussian, NoiseModel};
use crate::rng::{self, Stream};

/// States whose ∞-norm exceeds this are treated as diverged.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

pub type DynamicsFn = dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync;
pub type InputFn = dyn Fn(usize) -> Vec<f64> + Send + Sync;

#[derive(Clone)]
pub enum Dynamics {
    /// `f(x, u) = F x + B u`; without `B` the input is ignored.
    Linear { f: DMatrix<f64>, b: Option<DMatrix<f64>> },
    Custom(Arc<DynamicsFn>),
}

impl fmt::Debug for Dynamics {
    fn fmt(&self, fmt: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dynamics::Linear { f, b } => fmt
                .debug_struct("Linear")
                .field("f", f)
                .field("b", b)
                .finish(),
            Dynamics::Custom(_) => fmt.write_str("Custom(..)"),
        }
    }
}

#[derive(Clone)]
pub enum InputPolicy {
    /// `u_k = 0` of the given dimension.
    Zero(usize),
    Schedule { dim: usize, input: Arc<InputFn> },
}

impl fmt::Debug for InputPolicy {
    fn fmt(&self, fmt: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InputPolicy::Zero(m) => write!(fmt, "Zero({m})"),
            InputPolicy::Schedule { dim, .. } => write!(fmt, "Schedule {{ dim: {dim} }}"),
        }
    }
}

impl InputPolicy {
    pub fn dim(&self) -> usize {
        match self {
            InputPolicy::Zero(m) | InputPolicy::Schedule { dim: m, .. } => *m,
        }
    }

    pub fn input(&self, k: usize) -> Vec<f64> {
        match self {
            InputPolicy::Zero(m) => vec![0.0; *m],
            InputPolicy::Schedule { input, .. } => input(k),
        }
    }
}

/// The stochastic dynamical system `Φ`.
#[derive(Debug, Clone)]
pub struct SystemModel {
    dynamics: Dynamics,
    noise: NoiseModel,
    inputs: InputPolicy,
}

impl SystemModel {
    pub fn linear(f: DMatrix<f64>, noise: NoiseModel) -> Result<Self> {
        let d = noise.dim();
        if f.nrows() != d || f.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, got: f.nrows() });
        }
        Ok(Self { dynamics: Dynamics::Linear { f, b: None }, noise, inputs: InputPolicy::Zero(0) })
    }

    /// Linear system with input matrix `B` (d×m) and an input schedule.
    pub fn linear_with_input(
        f: DMatrix<f64>,
        b: DMatrix<f64>,
        noise: NoiseModel,
        inputs: InputPolicy,
    ) -> Result<Self> {
        let d = noise.dim();
        if f.nrows() != d || f.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, got: f.nrows() });
        }
        check_dim(d, b.nrows())?;
        check_dim(inputs.dim(), b.ncols())?;
        Ok(Self { dynamics: Dynamics::Linear { f, b: Some(b) }, noise, inputs })
    }

    /// System with arbitrary dynamics; the output dimension is checked on every step.
    pub fn custom<F>(dynamics: F, noise: NoiseModel, inputs: InputPolicy) -> Self
    where
        F: Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        Self { dynamics: Dynamics::Custom(Arc::new(dynamics)), noise, inputs }
    }

    pub fn dim(&self) -> usize {
        self.noise.dim()
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    pub fn dynamics(&self) -> &Dynamics {
        &self.dynamics
    }

    pub fn input_policy(&self) -> &InputPolicy {
        &self.inputs
    }

    /// `f(x, u)`.
    pub fn step(&self, state: &[f64], input: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), state.len())?;
        match &self.dynamics {
            Dynamics::Linear { f, b } => {
                let x = DVector::from_column_slice(state);
                let mut next = f * x;
                if let Some(b) = b {
                    check_dim(b.ncols(), input.len())?;
                    next += b * DVector::from_column_slice(input);
                }
                Ok(next.as_slice().to_vec())
            }
            Dynamics::Custom(f) => {
                let next = f(state, input);
                check_dim(self.dim(), next.len())?;
                Ok(next)
            }
        }
    }

    /// Generates `x_1..x_K` from `x0`, recording the realized noises. The noise
    /// stream is seeded by `seed` alone.
    pub fn simulate(&self, x0: &[f64], horizon: usize, seed: u64) -> Result<Trajectory> {
        check_dim(self.dim(), x0.len())?;
        if horizon == 0 {
            return Err(Error::Contract("horizon must be at least 1".into()));
        }
        let mut stream = rng::stream(seed);
        let mut states = Vec::with_capacity(horizon);
        let mut noises = Vec::with_capacity(horizon);
        let mut inputs = Vec::with_capacity(horizon);
        let mut x = x0.to_vec();
        for k in 0..horizon {
            let u = self.inputs.input(k);
            let w = self.noise.sample(&mut stream);
            let mut next = self.step(&x, &u)?;
            for (n, wi) in next.iter_mut().zip(&w) {
                *n += wi;
            }
            if next.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_LIMIT) {
                return Err(Error::Diverged { step: k + 1 });
            }
            states.push(next.clone());
            noises.push(w);
            inputs.push(u);
            x = next;
        }
        Ok(Trajectory { initial_state: x0.to_vec(), states, noises, inputs, seed })
    }

    /// Whether the support-diameter condition `diam(supp) > 2ε` holds.
    pub fn support_condition(&self, eps: f64) -> bool {
        self.noise.support_diameter() > 2.0 * eps
    }
}

/// Realized states `x_1..x_K`, the noises `w_0..w_{K-1}` that produced them and
/// the applied inputs `u_0..u_{K-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub initial_state: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub noises: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
    pub seed: u64,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.states.len()
    }

    /// `x_k` for `k = 0..=K`.
    pub fn state(&self, k: usize) -> &[f64] {
        if k == 0 {
            &self.initial_state
        } else {
            &self.states[k - 1]
        }
    }

    pub(crate) fn check_shape(&self, dim: usize) -> Result<()> {
        let k = self.states.len();
        if self.noises.len() != k || self.inputs.len() != k {
            return Err(Error::Contract(format!(
                "trajectory has {k} states, {} noises and {} inputs",
                self.noises.len(),
                self.inputs.len()
            )));
        }
        check_dim(dim, self.initial_state.len())?;
        for (s, w) in self.states.iter().zip(&self.noises) {
            check_dim(dim, s.len())?;
            check_dim(dim, w.len())?;
        }
        Ok(())
    }

    /// Checks `x_{k+1} = f(x_k, u_k) + w_k` bit for bit.
    pub fn replays_under(&self, system: &SystemModel) -> Result<bool> {
        self.check_shape(system.dim())?;
        for k in 0..self.horizon() {
            let mut next = system.step(self.state(k), &self.inputs[k])?;
            for (n, w) in next.iter_mut().zip(&self.noises[k]) {
                *n += w;
            }
            if next != self.states[k] {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// Observation model `y_k = g(x_k, u_k) + v_k`.
#[derive(Debug, Clone, PartialEq)]
pub enum ObservationModel {
    Identity,
    AdditiveGaussian(Gaussian),
}

impl ObservationModel {
    pub fn additive_gaussian(cov: DMatrix<f64>) -> Result<Self> {
        let d = cov.nrows();
        Ok(ObservationModel::AdditiveGaussian(Gaussian::new(vec![0.0; d], cov)?))
    }

    pub fn observe<R: Rng + ?Sized>(&self, state: &[f64], _input: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        match self {
            ObservationModel::Identity => Ok(state.to_vec()),
            ObservationModel::AdditiveGaussian(g) => {
                check_dim(g.dim(), state.len())?;
                let v = NoiseModel::Gaussian(g.clone()).sample(rng);
                Ok(state.iter().zip(v).map(|(x, v)| x + v).collect())
            }
        }
    }
}

/// Standard-normal initial state drawn from its own seed.
pub fn random_initial_state(dim: usize, seed: u64) -> Vec<f64> {
    let mut s = rng::substream(seed, &[rng::tag::INITIAL_STATE]);
    (0..dim).map(|_| s.sample(StandardNormal)).collect()
}

fn standard_normal_matrix(dim: usize, stream: &mut Stream) -> DMatrix<f64> {
    DMatrix::from_fn(dim, dim, |_, _| stream.sample(StandardNormal))
}

/// Spectral radius of a square matrix (largest eigenvalue modulus).
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max)
}

/// Dynamics matrix with i.i.d. standard-normal entries rescaled to the given
/// spectral radius.
pub fn random_dynamics_matrix(dim: usize, radius: f64, seed: u64) -> Result<DMatrix<f64>> {
    if !(radius > 0.0) {
        return Err(Error::Domain(format!("spectral radius must be positive, got {radius}")));
    }
    let mut s = rng::stream(seed);
    let m = standard_normal_matrix(dim, &mut s);
    let rho = spectral_radius(&m);
    if !(rho > 0.0) {
        return Err(Error::Domain("random matrix has zero spectral radius".into()));
    }
    Ok(m * (radius / rho))
}

/// Covariance `A Aᵀ` from i.i.d. standard-normal `A`, normalized so its largest
/// eigenvalue equals `radius`.
pub fn random_covariance(dim: usize, radius: f64, seed: u64) -> Result<DMatrix<f64>> {
    if !(radius > 0.0) {
        return Err(Error::Domain(format!("spectral radius must be positive, got {radius}")));
    }
    let mut s = rng::stream(seed);
    let a = standard_normal_matrix(dim, &mut s);
    let sigma = &a * a.transpose();
    let rho = sigma.clone().symmetric_eigen().eigenvalues.max();
    let mut cov = sigma * (radius / rho);
    // symmetrize exactly
    for i in 0..dim {
        for j in (i + 1)..dim {
            let v = 0.5 * (cov[(i, j)] + cov[(j, i)]);
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    Ok(cov)
}

/// Mean vector with i.i.d. standard-normal entries.
pub fn random_mean(dim: usize, seed: u64) -> Vec<f64> {
    let mut s = rng::substream(seed, &[0x6d75]);
    (0..dim).map(|_| s.sample(StandardNormal)).collect()
}
