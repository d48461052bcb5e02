//! Prediction-performance quantities.
//!
//! All rates are natural-log decay rates per step, i.e. averages of
//! `ln P(‖w_k − ŵ_k‖_∞ ≤ ε)`, so they are never positive. Expected rates average
//! the per-trajectory rate (expectation of the log), not the log of the expected
//! probability; the latter is what [`epsilon_accurate_probability`] reports.

use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::noise::NoiseModel;
use crate::partition::{discretize, empirical_type, DiscreteDist, DiscretizeMethod, GridPartition};
use crate::predictors::{PredictorSpec, StepLaw};
use crate::rng::{self, tag};
use crate::sds::{random_initial_state, SystemModel, Trajectory};
use crate::special::log_sum_exp;

/// z-value of a two-sided 95% normal interval.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Default number of trajectories for expected rates.
pub const DEFAULT_TRAJECTORIES: usize = 200;

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub eps: f64,
    pub horizon: usize,
    pub n_traj: usize,
    pub seed: u64,
    /// Monte-Carlo budget for non-analytic box probabilities and discretizations.
    pub budget: usize,
    /// Common initial state; `None` draws a standard-normal state per trajectory.
    pub initial_state: Option<Vec<f64>>,
    /// When set, the discrete evaluation on this partition is added to the report.
    pub partition: Option<GridPartition>,
}

impl EvalConfig {
    pub fn new(eps: f64, horizon: usize, n_traj: usize, seed: u64) -> Self {
        Self {
            eps,
            horizon,
            n_traj,
            seed,
            budget: crate::noise::DEFAULT_BOX_BUDGET,
            initial_state: None,
            partition: None,
        }
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        self.budget = budget;
        self
    }

    pub fn with_partition(mut self, partition: GridPartition) -> Self {
        self.partition = Some(partition);
        self
    }

    pub fn with_initial_state(mut self, x0: Vec<f64>) -> Self {
        self.initial_state = Some(x0);
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) {
            return Err(Error::Contract(format!("eps must be positive, got {}", self.eps)));
        }
        if self.horizon == 0 || self.n_traj == 0 {
            return Err(Error::Contract("horizon and n_traj must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonAccuracy {
    pub horizon: usize,
    pub estimate: f64,
    pub ln_estimate: f64,
    pub gamma: f64,
    pub gamma_bound: f64,
    pub ln_gamma_bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub eps: f64,
    pub horizon: usize,
    pub n_traj: usize,
    pub per_trajectory_rates: Vec<f64>,
    pub mean_rate: f64,
    /// Half-width of the 95% normal confidence interval of `mean_rate`.
    pub ci_halfwidth: f64,
    pub exponent_approx: f64,
    pub discrete_rate: Option<f64>,
    pub epsilon_accurate_prob: Option<EpsilonAccuracy>,
    /// Trajectories with a zero step score (rate `-inf`).
    pub poisoned: usize,
}

impl MetricsReport {
    pub fn degenerate(&self) -> bool {
        self.poisoned > 0
    }

    pub fn ci(&self) -> (f64, f64) {
        (self.mean_rate - self.ci_halfwidth, self.mean_rate + self.ci_halfwidth)
    }
}

/// Pairwise summation; deterministic for a fixed input order.
pub(crate) fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 16 {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Mean and 95% half-width. A single sample has an infinite half-width.
pub fn mean_and_ci(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = pairwise_sum(values) / n;
    if values.len() < 2 {
        return (mean, f64::INFINITY);
    }
    let sq: Vec<f64> = values.iter().map(|v| (v - mean).powi(2)).collect();
    let var = pairwise_sum(&sq) / (n - 1.0);
    (mean, Z95 * (var / n).sqrt())
}

/// Seed of the `index`-th trajectory of an experiment.
pub fn trajectory_seed(seed: u64, index: usize) -> u64 {
    rng::derive_seed(seed, &[tag::TRAJECTORY, index as u64])
}

/// `ln` step scores `ln P(‖w_k − ŵ_k‖_∞ ≤ ε)` along a trajectory. The
/// Monte-Carlo stream of step `k` is derived from `(trajectory.seed, k)`.
pub fn step_log_scores(
    system: &SystemModel,
    predictor: &PredictorSpec,
    trajectory: &Trajectory,
    eps: f64,
    budget: usize,
) -> Result<Vec<f64>> {
    trajectory.check_shape(system.dim())?;
    trajectory
        .noises
        .iter()
        .enumerate()
        .map(|(k, w)| {
            let mut s = rng::substream(trajectory.seed, &[tag::STEP_SCORE, k as u64]);
            predictor.step_score(k, w, eps, budget, &mut s).map(|b| b.ln_probability)
        })
        .collect()
}

/// `(1/K) Σ_k ln P(‖w_k − ŵ_k‖_∞ ≤ ε)`; `-inf` if any step scores zero.
pub fn trajectory_rate(
    system: &SystemModel,
    predictor: &PredictorSpec,
    trajectory: &Trajectory,
    eps: f64,
    budget: usize,
) -> Result<f64> {
    let logs = step_log_scores(system, predictor, trajectory, eps, budget)?;
    Ok(rate_of(&logs))
}

fn rate_of(logs: &[f64]) -> f64 {
    if logs.iter().any(|l| *l == f64::NEG_INFINITY) {
        f64::NEG_INFINITY
    } else {
        pairwise_sum(logs) / logs.len() as f64
    }
}

/// Running rate `(1/k) Σ_{j<k} ln score_j` for `k = 1..=K`.
pub fn running_rates(log_scores: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    log_scores
        .iter()
        .enumerate()
        .map(|(k, l)| {
            acc += l;
            acc / (k + 1) as f64
        })
        .collect()
}

/// Simulates the `n_traj` trajectories of an experiment in parallel; the
/// result does not depend on the number of workers.
pub fn simulate_batch(system: &SystemModel, config: &EvalConfig) -> Result<Vec<Trajectory>> {
    config.validate()?;
    if let Some(x0) = &config.initial_state {
        check_dim(system.dim(), x0.len())?;
    }
    (0..config.n_traj)
        .into_par_iter()
        .map(|i| {
            let seed = trajectory_seed(config.seed, i);
            let x0 = match &config.initial_state {
                Some(x0) => x0.clone(),
                None => random_initial_state(system.dim(), seed),
            };
            system.simulate(&x0, config.horizon, seed)
        })
        .collect()
}

/// Step log-scores of every trajectory of an experiment.
pub fn batch_log_scores(
    system: &SystemModel,
    predictor: &PredictorSpec,
    trajectories: &[Trajectory],
    eps: f64,
    budget: usize,
) -> Result<Vec<Vec<f64>>> {
    trajectories
        .par_iter()
        .map(|t| step_log_scores(system, predictor, t, eps, budget))
        .collect()
}

/// Monte-Carlo expected prediction rate with a 95% confidence interval.
pub fn expected_rate(
    system: &SystemModel,
    predictor: &PredictorSpec,
    config: &EvalConfig,
) -> Result<MetricsReport> {
    let trajectories = simulate_batch(system, config)?;
    let logs = batch_log_scores(system, predictor, &trajectories, config.eps, config.budget)?;
    report_from_scores(system, predictor, config, &logs)
}

/// Builds a report from precomputed step log-scores (one vector per trajectory).
pub fn report_from_scores(
    system: &SystemModel,
    predictor: &PredictorSpec,
    config: &EvalConfig,
    logs: &[Vec<f64>],
) -> Result<MetricsReport> {
    let rates: Vec<f64> = logs.iter().map(|l| rate_of(l)).collect();
    let poisoned = rates.iter().filter(|r| **r == f64::NEG_INFINITY).count();
    let (mean_rate, ci_halfwidth) = if poisoned > 0 {
        (f64::NEG_INFINITY, f64::INFINITY)
    } else {
        mean_and_ci(&rates)
    };
    let discrete = match &config.partition {
        Some(p) => Some(discrete_rate_for(system, predictor, p, config)?.value),
        None => None,
    };
    Ok(MetricsReport {
        eps: config.eps,
        horizon: config.horizon,
        n_traj: rates.len(),
        per_trajectory_rates: rates,
        mean_rate,
        ci_halfwidth,
        exponent_approx: exponent_approx(system, config.eps)?,
        discrete_rate: discrete,
        epsilon_accurate_prob: None,
        poisoned,
    })
}

/// Result of the discrete evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteRate {
    pub value: f64,
    /// Steps whose predictor law misses mass of `q_Σ` (infinite KL).
    pub unsupported_steps: Vec<usize>,
}

/// `−H_s(q_Σ) − (1/K) Σ_k D_KL(q_Σ ‖ q̂_Σ^{(k)})`.
pub fn discrete_rate(q: &DiscreteDist, predicted: &[DiscreteDist]) -> Result<DiscreteRate> {
    if predicted.is_empty() {
        return Err(Error::Contract("discrete rate needs at least one step".into()));
    }
    let mut kls = Vec::with_capacity(predicted.len());
    let mut unsupported = Vec::new();
    for (k, qh) in predicted.iter().enumerate() {
        let kl = q.kl_divergence(qh)?;
        if kl.is_infinite() {
            unsupported.push(k);
        }
        kls.push(kl);
    }
    let value = if unsupported.is_empty() {
        -q.shannon_entropy() - pairwise_sum(&kls) / kls.len() as f64
    } else {
        f64::NEG_INFINITY
    };
    Ok(DiscreteRate { value, unsupported_steps: unsupported })
}

/// Discrete evaluation of a predictor against a system on `partition`.
pub fn discrete_rate_for(
    system: &SystemModel,
    predictor: &PredictorSpec,
    partition: &GridPartition,
    config: &EvalConfig,
) -> Result<DiscreteRate> {
    let method = |m: &NoiseModel, salt: u64| {
        DiscretizeMethod::auto(m, config.budget, rng::derive_seed(config.seed, &[tag::DISCRETIZE, salt]))
    };
    let q = discretize(system.noise(), partition, method(system.noise(), u64::MAX))?;
    let predicted = match &predictor.law {
        crate::predictors::OutputLaw::Scheduled(_) => (0..config.horizon)
            .map(|k| match predictor.step_law(k) {
                StepLaw::Density(m) => discretize(&m, partition, method(&m, k as u64)),
                StepLaw::Point(p) => DiscreteDist::point_mass(partition, partition.label(p)?),
            })
            .collect::<Result<Vec<_>>>()?,
        _ => {
            let one = match predictor.step_law(0) {
                StepLaw::Density(m) if *m == *system.noise() => q.clone(),
                StepLaw::Density(m) => discretize(&m, partition, method(&m, 0))?,
                StepLaw::Point(p) => DiscreteDist::point_mass(partition, partition.label(p)?)?,
            };
            vec![one; config.horizon]
        }
    };
    discrete_rate(&q, &predicted)
}

/// `d ln(2ε) − H_d(q)`.
pub fn exponent_approx(system: &SystemModel, eps: f64) -> Result<f64> {
    noise_exponent_approx(system.noise(), eps)
}

pub fn noise_exponent_approx(noise: &NoiseModel, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::Contract(format!("eps must be positive, got {eps}")));
    }
    Ok(noise.dim() as f64 * (2.0 * eps).ln() - noise.differential_entropy()?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TypeRate {
    pub value: f64,
    /// Noises that fell in cells of zero `q_Σ` mass.
    pub zero_mass_hits: usize,
}

/// `−H_s(t) − D_KL(t ‖ q_Σ)` for the empirical type `t` of `noises`.
pub fn type_rate<P: AsRef<[f64]>>(
    noises: &[P],
    partition: &GridPartition,
    q: &DiscreteDist,
) -> Result<TypeRate> {
    let t = empirical_type(partition, noises)?;
    let kl = t.kl_divergence(q)?;
    let zero_mass_hits = noises
        .iter()
        .filter(|w| q.weights()[partition.label_unchecked(w.as_ref())] == 0.0)
        .count();
    let value = if kl.is_infinite() { f64::NEG_INFINITY } else { -t.shannon_entropy() - kl };
    Ok(TypeRate { value, zero_mass_hits })
}

/// `(1/K) Σ_k ln q_Σ(Θ_Σ(w_k))`, the optimal predictor's discrete log-probability.
pub fn direct_log_mass<P: AsRef<[f64]>>(
    noises: &[P],
    partition: &GridPartition,
    q: &DiscreteDist,
) -> Result<f64> {
    check_dim(partition.len(), q.len())?;
    if noises.is_empty() {
        return Err(Error::Contract("empty noise sequence".into()));
    }
    let logs = noises
        .iter()
        .map(|w| partition.label(w.as_ref()).map(|i| q.weights()[i].ln()))
        .collect::<Result<Vec<f64>>>()?;
    Ok(pairwise_sum(&logs) / logs.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoeffdingBound {
    pub bound: f64,
    /// `L = max_i −ln q(i) / q(i)` over positive-mass cells.
    pub constant: f64,
    /// `L = 0`: `q` is a point mass and the rate cannot deviate.
    pub degenerate: bool,
}

/// `min(1, 2 exp(−2Kt²/L²))`, bounding `P(|type_rate + H_s(q)| ≥ t)`.
pub fn hoeffding_bound(q: &DiscreteDist, horizon: usize, t: f64) -> Result<HoeffdingBound> {
    if !(t > 0.0) || horizon == 0 {
        return Err(Error::Contract("hoeffding bound needs t > 0 and K >= 1".into()));
    }
    let constant = q
        .weights()
        .iter()
        .filter(|w| **w > 0.0)
        .map(|w| -w.ln() / w)
        .fold(0.0, f64::max);
    if constant == 0.0 {
        return Ok(HoeffdingBound { bound: 0.0, constant, degenerate: true });
    }
    let bound = (2.0 * (-2.0 * horizon as f64 * t * t / (constant * constant)).exp()).min(1.0);
    Ok(HoeffdingBound { bound, constant, degenerate: false })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammaMax {
    /// `γ = max_s P(‖X − s‖_∞ ≤ ε)`.
    pub gamma: f64,
    pub argmax: Vec<f64>,
    pub std_error: f64,
}

/// Maximal ε-box mass of a law over all box centers.
///
/// Gaussians and uniform boxes are symmetric and unimodal, so the box centred on
/// the mean is optimal. Grid densities use a multistart search over cell centers
/// followed by a shrinking pattern search.
pub fn gamma_max(model: &NoiseModel, eps: f64, budget: usize, seed: u64) -> Result<GammaMax> {
    let mut stream = rng::substream(seed, &[tag::GAMMA]);
    match model {
        NoiseModel::Gaussian(_) | NoiseModel::UniformBox(_) => {
            let center = model.mean();
            let b = model.box_probability(&center, eps, budget, &mut stream)?;
            Ok(GammaMax { gamma: b.probability, argmax: center, std_error: b.std_error })
        }
        NoiseModel::GridDensity(g) => {
            let p = g.partition();
            let mass = |c: &[f64]| -> f64 {
                model
                    .box_probability(c, eps, 0, &mut rng::stream(0))
                    .map(|b| b.probability)
                    .unwrap_or(0.0)
            };
            let mut starts: Vec<(f64, Vec<f64>)> = (0..p.bounded_cells())
                .filter(|&i| g.weights().weights()[i] > 0.0)
                .map(|i| {
                    let c = p.center(i).expect("bounded");
                    (mass(&c), c)
                })
                .collect();
            starts.sort_by(|a, b| b.0.total_cmp(&a.0));
            starts.truncate(8);
            let mut best = (0.0, model.mean());
            for (mut value, mut c) in starts {
                let mut step = p.diameter();
                while step > p.diameter() * 1e-4 {
                    let mut improved = false;
                    for j in 0..c.len() {
                        for dir in [-1.0, 1.0] {
                            let mut trial = c.clone();
                            trial[j] += dir * step;
                            let v = mass(&trial);
                            if v > value {
                                value = v;
                                c = trial;
                                improved = true;
                            }
                        }
                    }
                    if !improved {
                        step *= 0.5;
                    }
                }
                if value > best.0 {
                    best = (value, c);
                }
            }
            Ok(GammaMax { gamma: best.0, argmax: best.1, std_error: 0.0 })
        }
    }
}

/// ε-accurate prediction probability along a ladder of horizons.
///
/// One batch of `n_traj` trajectories of length `max(horizons)` is simulated;
/// the estimate at horizon `K` averages `Π_{k<K} score_k` over trajectories in
/// log space. The bound is `Π_{k<K} γ_k`, with `γ_k` the maximal ε-box mass of
/// the predictor's law at step `k` (1 for point predictions).
pub fn epsilon_accurate_probability(
    system: &SystemModel,
    predictor: &PredictorSpec,
    config: &EvalConfig,
    horizons: &[usize],
) -> Result<Vec<EpsilonAccuracy>> {
    let max_k = horizons.iter().copied().max().unwrap_or(0);
    if horizons.is_empty() || horizons.contains(&0) {
        return Err(Error::Contract("horizons must be nonempty and positive".into()));
    }
    let cfg = EvalConfig { horizon: max_k, ..config.clone() };
    let trajectories = simulate_batch(system, &cfg)?;
    let logs = batch_log_scores(system, predictor, &trajectories, cfg.eps, cfg.budget)?;
    epsilon_accuracy_from_scores(predictor, &cfg, &logs, horizons)
}

pub fn epsilon_accuracy_from_scores(
    predictor: &PredictorSpec,
    config: &EvalConfig,
    logs: &[Vec<f64>],
    horizons: &[usize],
) -> Result<Vec<EpsilonAccuracy>> {
    let max_k = horizons.iter().copied().max().unwrap_or(0);
    if logs.iter().any(|l| l.len() < max_k) {
        return Err(Error::Contract("score sequences shorter than the largest horizon".into()));
    }
    let gamma_seed = rng::derive_seed(config.seed, &[tag::GAMMA]);
    let gammas: Vec<f64> = match &predictor.law {
        crate::predictors::OutputLaw::Scheduled(_) => (0..max_k)
            .map(|k| step_gamma(predictor, k, config, gamma_seed))
            .collect::<Result<_>>()?,
        _ => vec![step_gamma(predictor, 0, config, gamma_seed)?; max_k],
    };
    let n = logs.len() as f64;
    horizons
        .iter()
        .map(|&h| {
            let sums: Vec<f64> = logs.iter().map(|l| pairwise_sum(&l[..h])).collect();
            let ln_estimate = log_sum_exp(&sums) - n.ln();
            let ln_gamma_bound: f64 = gammas[..h].iter().map(|g| g.ln()).sum();
            Ok(EpsilonAccuracy {
                horizon: h,
                estimate: ln_estimate.exp(),
                ln_estimate,
                gamma: gammas[0],
                gamma_bound: ln_gamma_bound.exp(),
                ln_gamma_bound,
            })
        })
        .collect()
}

fn step_gamma(predictor: &PredictorSpec, k: usize, config: &EvalConfig, seed: u64) -> Result<f64> {
    match predictor.step_law(k) {
        StepLaw::Density(m) => Ok(gamma_max(&m, config.eps, config.budget, seed)?.gamma),
        StepLaw::Point(_) => Ok(1.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictors::{mismatched_gaussian_predictor, optimal_predictor};
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    fn scalar_system(noise: NoiseModel) -> SystemModel {
        SystemModel::linear(DMatrix::from_element(1, 1, 0.5), noise).unwrap()
    }

    #[test]
    fn uniform_interior_rate_is_closed_form() {
        // narrow-support F keeps every noise interior: use a tiny uniform draw region
        let s3 = 3f64.sqrt();
        let sys = scalar_system(NoiseModel::uniform_box(vec![0.0], vec![s3]).unwrap());
        let p = optimal_predictor(&sys);
        let t = Trajectory {
            initial_state: vec![0.0],
            states: vec![vec![0.3], vec![-0.2]],
            noises: vec![vec![0.3], vec![-0.35]],
            inputs: vec![vec![], vec![]],
            seed: 0,
        };
        let r = trajectory_rate(&sys, &p, &t, 0.1, 0).unwrap();
        assert_abs_diff_eq!(r, (0.1 / s3).ln(), epsilon = 1e-14);
        assert_abs_diff_eq!(r, -2.851_891_237_328_100_5, epsilon = 1e-12);
    }

    #[test]
    fn deterministic_always_close_scores_zero_rate() {
        let sys = scalar_system(NoiseModel::standard_gaussian(1, 1.0).unwrap());
        let t = sys.simulate(&[0.0], 5, 3).unwrap();
        let mut t2 = t.clone();
        for w in t2.noises.iter_mut() {
            w[0] = 0.05;
        }
        let p = PredictorSpec::deterministic(vec![0.0]);
        assert_eq!(trajectory_rate(&sys, &p, &t2, 0.1, 0).unwrap(), 0.0);
        let far = PredictorSpec::deterministic(vec![100.0]);
        assert_eq!(trajectory_rate(&sys, &far, &t, 0.1, 0).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn single_step_gaussian_rate() {
        let sys = scalar_system(NoiseModel::standard_gaussian(1, 1.0).unwrap());
        let t = Trajectory {
            initial_state: vec![0.0],
            states: vec![vec![0.0]],
            noises: vec![vec![0.0]],
            inputs: vec![vec![]],
            seed: 0,
        };
        let r = trajectory_rate(&sys, &optimal_predictor(&sys), &t, 0.1, 0).unwrap();
        assert_abs_diff_eq!(r, 0.079_655_674_554_057_f64.ln(), epsilon = 1e-10);
        assert_abs_diff_eq!(r, -2.530, epsilon = 1e-3);
    }

    #[test]
    fn shape_mismatch_is_contract_violation() {
        let sys = scalar_system(NoiseModel::standard_gaussian(1, 1.0).unwrap());
        let mut t = sys.simulate(&[0.0], 3, 0).unwrap();
        t.noises.pop();
        assert!(matches!(
            trajectory_rate(&sys, &optimal_predictor(&sys), &t, 0.1, 0),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn discrete_rate_examples() {
        let q = DiscreteDist::new(vec![0.25; 4]).unwrap();
        let r = discrete_rate(&q, &[q.clone(), q.clone()]).unwrap();
        assert_abs_diff_eq!(r.value, -(4f64.ln()), epsilon = 1e-15);
        let q = DiscreteDist::new(vec![0.5, 0.5]).unwrap();
        let qh = DiscreteDist::new(vec![0.9, 0.1]).unwrap();
        let r = discrete_rate(&q, &vec![qh; 7]).unwrap();
        assert_abs_diff_eq!(r.value, -1.203_972_804_325_936, epsilon = 1e-12);
        let miss = DiscreteDist::new(vec![1.0, 0.0]).unwrap();
        let r = discrete_rate(&q, &[q.clone(), miss]).unwrap();
        assert_eq!(r.value, f64::NEG_INFINITY);
        assert_eq!(r.unsupported_steps, vec![1]);
    }

    #[test]
    fn exponent_examples() {
        let s3 = 3f64.sqrt();
        let u = scalar_system(NoiseModel::uniform_box(vec![0.0], vec![s3]).unwrap());
        assert_abs_diff_eq!(exponent_approx(&u, 0.1).unwrap(), -2.851_891_237_328_100_5, epsilon = 1e-12);
        let g = SystemModel::linear(
            DMatrix::identity(2, 2),
            NoiseModel::standard_gaussian(2, 1.0).unwrap(),
        )
        .unwrap();
        let e = exponent_approx(&g, 0.1).unwrap();
        assert_abs_diff_eq!(e, 2.0 * 0.2f64.ln() - (2.0 * std::f64::consts::PI * std::f64::consts::E).ln(), epsilon = 1e-14);
        assert_abs_diff_eq!(e, -6.0567, epsilon = 1e-4);
        assert_abs_diff_eq!(exponent_approx(&g, 0.2).unwrap() - e, 2.0 * 2f64.ln(), epsilon = 1e-14);
        assert!(exponent_approx(&g, 0.0).is_err());
    }

    #[test]
    fn type_rate_examples() {
        let grid = GridPartition::cubic(vec![0.0], vec![2.0], 1.0).unwrap();
        let q = DiscreteDist::on_partition(vec![0.3, 0.7, 0.0], &grid).unwrap();
        let one = type_rate(&[[1.2], [1.9], [1.0]], &grid, &q).unwrap();
        assert_abs_diff_eq!(one.value, 0.7f64.ln(), epsilon = 1e-15);
        let q2 = DiscreteDist::on_partition(vec![0.5, 0.5, 0.0], &grid).unwrap();
        let exact = type_rate(&[[0.5], [1.5]], &grid, &q2).unwrap();
        assert_abs_diff_eq!(exact.value, -q2.shannon_entropy(), epsilon = 1e-15);
        let bad = type_rate(&[[0.5], [5.0]], &grid, &q).unwrap();
        assert_eq!(bad.value, f64::NEG_INFINITY);
        assert_eq!(bad.zero_mass_hits, 1);
    }

    #[test]
    fn type_rate_equals_direct_sum() {
        let sys = scalar_system(NoiseModel::standard_gaussian(1, 1.0).unwrap());
        let t = sys.simulate(&[0.0], 1000, 21).unwrap();
        let grid = GridPartition::for_model(sys.noise(), 0.1).unwrap();
        let q = discretize(sys.noise(), &grid, DiscretizeMethod::Analytic).unwrap();
        let a = type_rate(&t.noises, &grid, &q).unwrap().value;
        let b = direct_log_mass(&t.noises, &grid, &q).unwrap();
        assert!((a - b).abs() <= 1e-10, "{a} vs {b}");
    }

    #[test]
    fn hoeffding_examples() {
        let q = DiscreteDist::new(vec![0.5, 0.5]).unwrap();
        let b = hoeffding_bound(&q, 400, 0.1).unwrap();
        assert_abs_diff_eq!(b.constant, 2.0 * 2f64.ln(), epsilon = 1e-15);
        let expected = 2.0 * (-8.0 / (4.0 * 2f64.ln().powi(2))).exp();
        assert_abs_diff_eq!(b.bound, expected, epsilon = 1e-15);
        assert_abs_diff_eq!(b.bound, 0.0311, epsilon = 1e-4);
        assert_eq!(hoeffding_bound(&q, 400, 1e3).unwrap().bound, 0.0);
        let b2 = hoeffding_bound(&q, 800, 0.1).unwrap();
        assert_abs_diff_eq!(b2.bound, b.bound * b.bound / 2.0, epsilon = 1e-15);
        let point = DiscreteDist::new(vec![0.0, 1.0]).unwrap();
        let d = hoeffding_bound(&point, 10, 0.1).unwrap();
        assert!(d.degenerate && d.bound == 0.0);
    }

    #[test]
    fn gamma_examples() {
        let g = NoiseModel::standard_gaussian(1, 1.0).unwrap();
        let gm = gamma_max(&g, 0.1, 0, 0).unwrap();
        assert_abs_diff_eq!(gm.gamma, 0.079_655_674_554_057, epsilon = 1e-12);
        assert_abs_diff_eq!(gm.gamma.powi(10), 1.028_412_146_558_143e-11, epsilon = 1e-20);
        let u = NoiseModel::uniform_box(vec![0.0], vec![3f64.sqrt()]).unwrap();
        assert_eq!(gamma_max(&u, 3f64.sqrt(), 0, 0).unwrap().gamma, 1.0);
        // skewed grid density: the search should find the heavy cell pair
        let grid = GridPartition::cubic(vec![0.0], vec![1.0], 0.1).unwrap();
        let mut w = vec![0.05; 11];
        w[10] = 0.0;
        w[6] = 0.25;
        w[7] = 0.3;
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= total);
        let m = NoiseModel::grid_density(grid, DiscreteDist::new(w.clone()).unwrap()).unwrap();
        let gm = gamma_max(&m, 0.1, 0, 0).unwrap();
        assert_abs_diff_eq!(gm.gamma, w[6] + w[7], epsilon = 1e-9);
    }

    #[test]
    fn epsilon_accuracy_decays_under_gamma_bound() {
        let sys = scalar_system(NoiseModel::standard_gaussian(1, 1.0).unwrap());
        let p = optimal_predictor(&sys);
        let cfg = EvalConfig::new(0.1, 40, 50, 5);
        let ladder = epsilon_accurate_probability(&sys, &p, &cfg, &[5, 10, 20, 40]).unwrap();
        for w in ladder.windows(2) {
            assert!(w[1].ln_estimate < w[0].ln_estimate);
        }
        for e in &ladder {
            assert!(e.ln_estimate <= e.ln_gamma_bound);
        }
    }

    #[test]
    fn expected_rate_report_invariants() {
        let sys = scalar_system(NoiseModel::standard_gaussian(1, 1.0).unwrap());
        let cfg = EvalConfig::new(0.1, 50, 20, 1)
            .with_partition(GridPartition::for_model(sys.noise(), 0.1).unwrap());
        let r = expected_rate(&sys, &optimal_predictor(&sys), &cfg).unwrap();
        assert_eq!(r.per_trajectory_rates.len(), 20);
        assert!(r.per_trajectory_rates.iter().all(|v| *v <= 0.0));
        let avg = r.per_trajectory_rates.iter().sum::<f64>() / 20.0;
        assert_abs_diff_eq!(r.mean_rate, avg, epsilon = 1e-12);
        assert!(r.ci_halfwidth > 0.0);
        assert!(r.discrete_rate.unwrap() < r.mean_rate);
        let far = PredictorSpec::deterministic(vec![50.0]);
        let bad = expected_rate(&sys, &far, &cfg).unwrap();
        assert!(bad.degenerate());
        assert_eq!(bad.poisoned, 20);
    }

    #[test]
    fn mismatch_lowers_rate() {
        let sys = scalar_system(NoiseModel::standard_gaussian(1, 1.0).unwrap());
        let cfg = EvalConfig::new(0.1, 100, 40, 9);
        let opt = expected_rate(&sys, &optimal_predictor(&sys), &cfg).unwrap();
        let shifted =
            expected_rate(&sys, &mismatched_gaussian_predictor(&sys, 1.5, 0.0).unwrap(), &cfg)
                .unwrap();
        assert!(shifted.ci().1 < opt.ci().0);
    }
}
