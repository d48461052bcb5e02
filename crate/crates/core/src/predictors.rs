//! Predictors described by the law of their noise-space prediction
//! `ŵ_k = x̂_{k+1} − f(x_k, u_k)`.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::noise::{BoxMass, NoiseModel};
use crate::partition::{discretize, DiscreteDist, DiscretizeMethod, GridPartition};
use crate::sds::{ObservationModel, SystemModel};

pub type LawSchedule = dyn Fn(usize) -> NoiseModel + Send + Sync;

/// Per-step output law `q̂^{(k)}` of a predictor.
#[derive(Clone)]
pub enum OutputLaw {
    /// `ŵ_k` drawn i.i.d. from the same law at every step.
    Stochastic(NoiseModel),
    /// Step-dependent law; may only use information available at step `k`.
    Scheduled(Arc<LawSchedule>),
    /// `ŵ_k` fixed to a point (a point-mass law).
    Deterministic(Vec<f64>),
}

impl fmt::Debug for OutputLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OutputLaw::Stochastic(m) => f.debug_tuple("Stochastic").field(m).finish(),
            OutputLaw::Scheduled(_) => f.write_str("Scheduled(..)"),
            OutputLaw::Deterministic(p) => f.debug_tuple("Deterministic").field(p).finish(),
        }
    }
}

/// The law in force at one step.
#[derive(Debug, Clone)]
pub enum StepLaw<'a> {
    Density(std::borrow::Cow<'a, NoiseModel>),
    Point(&'a [f64]),
}

#[derive(Debug, Clone)]
pub struct PredictorSpec {
    pub observation: ObservationModel,
    pub law: OutputLaw,
    pub label: String,
}

impl PredictorSpec {
    pub fn deterministic(point: Vec<f64>) -> Self {
        Self {
            observation: ObservationModel::Identity,
            law: OutputLaw::Deterministic(point),
            label: "deterministic".into(),
        }
    }

    pub fn step_law(&self, k: usize) -> StepLaw<'_> {
        match &self.law {
            OutputLaw::Stochastic(m) => StepLaw::Density(std::borrow::Cow::Borrowed(m)),
            OutputLaw::Scheduled(f) => StepLaw::Density(std::borrow::Cow::Owned(f(k))),
            OutputLaw::Deterministic(p) => StepLaw::Point(p),
        }
    }

    /// Draws `ŵ_k`.
    pub fn sample_noise_prediction<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Vec<f64> {
        match self.step_law(k) {
            StepLaw::Density(m) => m.sample(rng),
            StepLaw::Point(p) => p.to_vec(),
        }
    }

    /// Predicted next state `x̂_{k+1} = f(x_k, u_k) + ŵ_k`.
    pub fn predict_state<R: Rng + ?Sized>(
        &self,
        system: &SystemModel,
        state: &[f64],
        input: &[f64],
        k: usize,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        let mut next = system.step(state, input)?;
        let w = self.sample_noise_prediction(k, rng);
        check_dim(next.len(), w.len())?;
        for (n, w) in next.iter_mut().zip(w) {
            *n += w;
        }
        Ok(next)
    }

    /// `P(‖ŵ_k − w_k‖_∞ ≤ ε)` over the predictor's randomness with the realized
    /// noise fixed.
    pub fn step_score<R: Rng + ?Sized>(
        &self,
        k: usize,
        realized_noise: &[f64],
        eps: f64,
        budget: usize,
        rng: &mut R,
    ) -> Result<BoxMass> {
        match self.step_law(k) {
            StepLaw::Density(m) => m.box_probability(realized_noise, eps, budget, rng),
            StepLaw::Point(p) => {
                check_dim(p.len(), realized_noise.len())?;
                if !(eps > 0.0) {
                    return Err(Error::Contract(format!("eps must be positive, got {eps}")));
                }
                let hit = p.iter().zip(realized_noise).all(|(a, b)| (a - b).abs() <= eps);
                Ok(BoxMass::exact(if hit { 1.0 } else { 0.0 }))
            }
        }
    }

    /// `q̂_Σ^{(k)}` on `partition`.
    pub fn discretized_law(
        &self,
        k: usize,
        partition: &GridPartition,
        method: DiscretizeMethod,
    ) -> Result<DiscreteDist> {
        match self.step_law(k) {
            StepLaw::Density(m) => discretize(&m, partition, method),
            StepLaw::Point(p) => DiscreteDist::point_mass(partition, partition.label(p)?),
        }
    }
}

/// Complete observation plus `ŵ_k ~ W` independently of the history.
pub fn optimal_predictor(system: &SystemModel) -> PredictorSpec {
    PredictorSpec {
        observation: ObservationModel::Identity,
        law: OutputLaw::Stochastic(system.noise().clone()),
        label: "optimal".into(),
    }
}

/// Predictor whose believed noise law is `N(μ + τ𝟙, Σ + ηI)`.
pub fn mismatched_gaussian_predictor(
    system: &SystemModel,
    tau: f64,
    eta: f64,
) -> Result<PredictorSpec> {
    let NoiseModel::Gaussian(g) = system.noise() else {
        return Err(Error::Unsupported("mismatch predictor needs gaussian system noise".into()));
    };
    if !(eta >= -1.0) || !tau.is_finite() || !eta.is_finite() {
        return Err(Error::Domain(format!("invalid mismatch (tau {tau}, eta {eta})")));
    }
    let d = g.dim();
    let mean = g.mean().iter().map(|m| m + tau).collect();
    let cov = g.covariance() + DMatrix::<f64>::identity(d, d) * eta;
    let law = NoiseModel::gaussian(mean, cov).map_err(|e| match e {
        Error::Domain(m) => Error::Domain(format!("Σ + ηI with eta {eta}: {m}")),
        other => other,
    })?;
    Ok(PredictorSpec {
        observation: ObservationModel::Identity,
        law: OutputLaw::Stochastic(law),
        label: format!("mismatch(tau={tau}, eta={eta})"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use approx::assert_abs_diff_eq;

    fn gaussian_system(cov: DMatrix<f64>) -> SystemModel {
        let d = cov.nrows();
        SystemModel::linear(
            DMatrix::identity(d, d) * 0.5,
            NoiseModel::gaussian(vec![0.2; d], cov).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn optimal_law_is_system_noise_and_kl_vanishes() {
        let sys = gaussian_system(DMatrix::identity(2, 2));
        let p = optimal_predictor(&sys);
        let grid = GridPartition::for_model(sys.noise(), 0.5).unwrap();
        let q = discretize(sys.noise(), &grid, DiscretizeMethod::Analytic).unwrap();
        for k in [0, 17] {
            let qh = p.discretized_law(k, &grid, DiscretizeMethod::Analytic).unwrap();
            assert_eq!(q.kl_divergence(&qh).unwrap(), 0.0);
        }
    }

    #[test]
    fn optimal_samples_have_noise_covariance() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5]);
        let sys = gaussian_system(cov.clone());
        let p = optimal_predictor(&sys);
        let mut r = rng::stream(4);
        let xs: Vec<Vec<f64>> = (0..100_000).map(|k| p.sample_noise_prediction(k, &mut r)).collect();
        let c = crate::noise::tests::sample_covariance(&xs);
        assert!((c - &cov).norm() <= 0.05 * cov.norm());
    }

    #[test]
    fn predicted_state_minus_dynamics_is_a_noise_draw() {
        let sys = gaussian_system(DMatrix::identity(1, 1));
        let p = optimal_predictor(&sys);
        let x = [2.0];
        let mut a = rng::stream(6);
        let mut b = rng::stream(6);
        let xh = p.predict_state(&sys, &x, &[], 0, &mut a).unwrap();
        let w = sys.noise().sample(&mut b);
        assert_abs_diff_eq!(xh[0] - 1.0, w[0], epsilon = 1e-15);
    }

    #[test]
    fn mismatch_parameters() {
        let sys = gaussian_system(DMatrix::identity(2, 2));
        let zero = mismatched_gaussian_predictor(&sys, 0.0, 0.0).unwrap();
        match (&zero.law, &optimal_predictor(&sys).law) {
            (OutputLaw::Stochastic(a), OutputLaw::Stochastic(b)) => assert_eq!(a, b),
            _ => unreachable!(),
        }
        let shifted = mismatched_gaussian_predictor(&sys, 1.0, 0.0).unwrap();
        let OutputLaw::Stochastic(m) = &shifted.law else { unreachable!() };
        assert_eq!(m.mean(), vec![1.2, 1.2]);
        let wide = mismatched_gaussian_predictor(&sys, 0.0, 1.0).unwrap();
        let OutputLaw::Stochastic(m) = &wide.law else { unreachable!() };
        assert_eq!(m.covariance(), DMatrix::identity(2, 2) * 2.0);
        assert!(matches!(mismatched_gaussian_predictor(&sys, 0.0, -1.0), Err(Error::Domain(_))));
        let uni = SystemModel::linear(
            DMatrix::identity(1, 1),
            NoiseModel::uniform_box(vec![0.0], vec![1.0]).unwrap(),
        )
        .unwrap();
        assert!(mismatched_gaussian_predictor(&uni, 0.5, 0.0).is_err());
    }

    #[test]
    fn step_score_examples() {
        let sys = SystemModel::linear(
            DMatrix::identity(1, 1),
            NoiseModel::standard_gaussian(1, 1.0).unwrap(),
        )
        .unwrap();
        let mut r = rng::stream(0);
        let s = optimal_predictor(&sys).step_score(0, &[0.0], 0.1, 0, &mut r).unwrap();
        assert_abs_diff_eq!(s.probability, 0.07966, epsilon = 5e-6);
        let det = PredictorSpec::deterministic(vec![0.3]);
        assert_eq!(det.step_score(0, &[0.3], 0.1, 0, &mut r).unwrap().probability, 1.0);
        assert_eq!(det.step_score(0, &[0.5], 0.1, 0, &mut r).unwrap().probability, 0.0);
    }

    #[test]
    fn deterministic_discretizes_to_point_mass() {
        let grid = GridPartition::cubic(vec![-1.0], vec![1.0], 0.5).unwrap();
        let det = PredictorSpec::deterministic(vec![0.3]);
        let d = det.discretized_law(0, &grid, DiscretizeMethod::Analytic).unwrap();
        assert_eq!(d.weights()[2], 1.0);
    }

    #[test]
    fn scheduled_law_is_evaluated_per_step() {
        let p = PredictorSpec {
            observation: ObservationModel::Identity,
            law: OutputLaw::Scheduled(Arc::new(|k| {
                NoiseModel::uniform_box(vec![k as f64], vec![0.5]).unwrap()
            })),
            label: "drift".into(),
        };
        let mut r = rng::stream(0);
        assert_eq!(p.step_score(0, &[3.0], 0.1, 0, &mut r).unwrap().probability, 0.0);
        assert_abs_diff_eq!(
            p.step_score(3, &[3.0], 0.1, 0, &mut r).unwrap().probability,
            0.2,
            epsilon = 1e-15
        );
    }
}
