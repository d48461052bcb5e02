//! Unpredictable-noise design in one dimension.
//!
//! * [`analytic_design`] returns the uniform law on `[−√3σ, √3σ]`.
//! * [`numeric_design`] maximizes grid entropy under zero mean, variance `σ²`
//!   and support `[−N, N]` by moment matching in the exponential family
//!   `w_i ∝ exp(λ₁ x_i + λ₂ x_i²)`, which is the stationarity condition of the
//!   Lagrangian.
//! * [`one_step_value`] is the best single-point prediction mass
//!   `max_u ∫_{u−r}^{u+r} q`, and [`equivalence_check`] ranks a candidate family
//!   by it and by differential entropy.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

use crate::error::{check_dim, Error, Result};
use crate::noise::NoiseModel;
use crate::partition::{DiscreteDist, GridPartition};
use crate::special::{log_sum_exp, normal_cdf, normal_interval, normal_pdf};

const SQRT3: f64 = 1.732_050_807_568_877_2;

#[derive(Debug, Clone, PartialEq)]
pub struct DesignProblem {
    pub sigma: f64,
    /// Support half-width cap `N`.
    pub cap: f64,
    pub grid_resolution: usize,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl DesignProblem {
    /// Defaults: `N = 3σ`, 10⁴ cells, tolerance 10⁻⁶.
    pub fn new(sigma: f64) -> Self {
        Self { sigma, cap: 3.0 * sigma, grid_resolution: 10_000, tolerance: 1e-6, max_iterations: 200 }
    }

    pub fn with_cap(mut self, cap: f64) -> Self {
        self.cap = cap;
        self
    }

    pub fn with_resolution(mut self, cells: usize) -> Self {
        self.grid_resolution = cells;
        self
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tolerance = tol;
        self
    }

    /// Design problem with a diagonal covariance `D`, solved axis by axis.
    pub fn axiswise(cov: &DMatrix<f64>) -> Result<Vec<Self>> {
        let d = cov.nrows();
        check_dim(d, cov.ncols())?;
        for i in 0..d {
            for j in 0..d {
                if i != j && cov[(i, j)] != 0.0 {
                    return Err(Error::Unsupported("design needs a diagonal covariance".into()));
                }
            }
        }
        Ok((0..d).map(|i| Self::new(cov[(i, i)].sqrt())).collect())
    }

    fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::Domain(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Config("tolerance must be positive".into()));
        }
        if self.grid_resolution < 100 {
            return Err(Error::Config(format!(
                "grid resolution must be at least 100, got {}",
                self.grid_resolution
            )));
        }
        if !(self.cap >= SQRT3 * self.sigma * (1.0 - 1e-12)) {
            return Err(Error::Infeasible(format!(
                "support cap {} is below sqrt(3)*sigma = {}",
                self.cap,
                SQRT3 * self.sigma
            )));
        }
        Ok(())
    }
}

/// Uniform law on `[−√3σ, √3σ]`: variance `σ²`, entropy `ln(2√3σ)`.
pub fn analytic_design(sigma: f64) -> Result<NoiseModel> {
    if !(sigma > 0.0) {
        return Err(Error::Domain(format!("sigma must be positive, got {sigma}")));
    }
    NoiseModel::uniform_box(vec![0.0], vec![SQRT3 * sigma])
}

#[derive(Debug, Clone)]
pub struct DesignOutcome {
    pub partition: GridPartition,
    pub weights: DiscreteDist,
    /// Differential entropy of the piecewise-constant density.
    pub achieved_entropy: f64,
    /// `[Σw − 1, Σxw, Σx²w − σ²]`.
    pub residuals: [f64; 3],
    /// `(λ₁, λ₂)` of `w ∝ exp(λ₁x + λ₂x²)`.
    pub multipliers: [f64; 2],
    pub iterations: usize,
}

impl DesignOutcome {
    pub fn cell_width(&self) -> f64 {
        self.partition.cell_width()[0]
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.partition.bounded_cells())
            .map(|i| self.partition.center(i).expect("bounded")[0])
            .collect()
    }

    /// Density value on each bounded cell.
    pub fn densities(&self) -> Vec<f64> {
        let dx = self.cell_width();
        self.weights.weights()[..self.partition.bounded_cells()]
            .iter()
            .map(|w| w / dx)
            .collect()
    }

    pub fn to_noise_model(&self) -> Result<NoiseModel> {
        NoiseModel::grid_density(self.partition.clone(), self.weights.clone())
    }

    /// `max_i |q(x_i) − u(x_i)|` against the uniform density on `[−h, h]`.
    pub fn sup_distance_to_uniform(&self, half_width: f64) -> f64 {
        let u = 1.0 / (2.0 * half_width);
        self.centers()
            .iter()
            .zip(self.densities())
            .map(|(x, q)| (q - if x.abs() <= half_width { u } else { 0.0 }).abs())
            .fold(0.0, f64::max)
    }

    /// Mass on cells whose centers lie outside `[−h, h]`.
    pub fn mass_outside(&self, half_width: f64) -> f64 {
        self.centers()
            .iter()
            .zip(self.weights.weights())
            .filter(|(x, _)| x.abs() > half_width)
            .map(|(_, w)| w)
            .sum()
    }

    /// Least-squares fit of `ln w_i` against `(1, x_i, x_i²)`.
    pub fn kkt_regression(&self) -> Result<[f64; 3]> {
        let pts: Vec<(f64, f64)> = self
            .centers()
            .into_iter()
            .zip(self.weights.weights().iter().copied())
            .filter(|(_, w)| *w > 0.0)
            .map(|(x, w)| (x, w.ln()))
            .collect();
        if pts.len() < 3 {
            return Err(Error::Domain("too few positive cells to regress".into()));
        }
        let a = DMatrix::from_fn(pts.len(), 3, |i, j| pts[i].0.powi(j as i32));
        let b = DVector::from_iterator(pts.len(), pts.iter().map(|p| p.1));
        let sol = a
            .svd(true, true)
            .solve(&b, 1e-14)
            .map_err(|e| Error::Inconsistent(format!("regression failed: {e}")))?;
        Ok([sol[0], sol[1], sol[2]])
    }
}

/// Entropy-maximizing grid law under the variance and support constraints.
pub fn numeric_design(problem: &DesignProblem) -> Result<DesignOutcome> {
    problem.validate()?;
    let n = problem.grid_resolution;
    let cap = problem.cap;
    let partition = GridPartition::cubic(vec![-cap], vec![cap], 2.0 * cap / n as f64)?;
    let dx = partition.cell_width()[0];
    let xs: Vec<f64> = (0..n).map(|i| -cap + (i as f64 + 0.5) * dx).collect();
    let target = problem.sigma * problem.sigma;

    let weights_for = |l: &Vector2<f64>| -> (Vec<f64>, f64) {
        let a: Vec<f64> = xs.iter().map(|x| l[0] * x + l[1] * x * x).collect();
        let lse = log_sum_exp(&a);
        (a.iter().map(|v| (v - lse).exp()).collect(), lse)
    };
    let dual = |l: &Vector2<f64>| weights_for(l).1 - l[1] * target;
    let moments = |w: &[f64]| -> (f64, f64, f64, f64, f64) {
        let mut m = [0.0; 5];
        for (x, wi) in xs.iter().zip(w) {
            let mut p = *wi;
            for mk in m.iter_mut() {
                *mk += p;
                p *= x;
            }
        }
        (m[0], m[1], m[2], m[3], m[4])
    };

    let mut lambda = Vector2::zeros();
    let mut residuals = [f64::INFINITY; 3];
    for iter in 0..problem.max_iterations {
        let (w, _) = weights_for(&lambda);
        let (m0, m1, m2, m3, m4) = moments(&w);
        residuals = [m0 - 1.0, m1, m2 - target];
        if residuals.iter().all(|r| r.abs() <= problem.tolerance) {
            return finish(partition, w, dx, residuals, lambda, iter);
        }
        let grad = Vector2::new(m1, m2 - target);
        let hess = Matrix2::new(m2 - m1 * m1, m3 - m1 * m2, m3 - m1 * m2, m4 - m2 * m2);
        let step = hess
            .try_inverse()
            .map(|h| h * grad)
            .unwrap_or(grad);
        // backtracking on the convex dual
        let current = dual(&lambda);
        let mut t = 1.0;
        loop {
            let trial = lambda - step * t;
            if dual(&trial) <= current - 1e-4 * t * grad.dot(&step) || t < 1e-10 {
                lambda = trial;
                break;
            }
            t *= 0.5;
        }
    }
    Err(Error::NonConvergence { iterations: problem.max_iterations, residuals })
}

fn finish(
    partition: GridPartition,
    mut w: Vec<f64>,
    dx: f64,
    residuals: [f64; 3],
    lambda: Vector2<f64>,
    iterations: usize,
) -> Result<DesignOutcome> {
    let achieved_entropy = w.iter().filter(|v| **v > 0.0).map(|v| v * (dx / v).ln()).sum();
    w.push(0.0);
    let weights = DiscreteDist::on_partition(w, &partition)?;
    Ok(DesignOutcome {
        partition,
        weights,
        achieved_entropy,
        residuals,
        multipliers: [lambda[0], lambda[1]],
        iterations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OneStepValue {
    pub value: f64,
    pub argmax: f64,
}

/// `max_u ∫_{u−r}^{u+r} q` for a one-dimensional law.
///
/// Grid search at spacing `≤ r/50` over the support, then golden-section
/// refinement; among equal maxima the center closest to zero is reported.
pub fn one_step_value(model: &NoiseModel, r: f64) -> Result<OneStepValue> {
    check_dim(1, model.dim())?;
    if !(r > 0.0) {
        return Err(Error::Contract(format!("radius must be positive, got {r}")));
    }
    let (lo, hi) = match model.support_box() {
        Some((a, b)) => (a[0], b[0]),
        None => {
            let m = model.mean()[0];
            let s = model.covariance()[(0, 0)].sqrt();
            (m - 8.0 * s, m + 8.0 * s)
        }
    };
    let mass = |u: f64| model.axis_interval_mass(0, u - r, u + r);
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let h = (r / 50.0).max(half / 1e6);
    let m = (half / h).ceil() as i64;
    let mut best = (f64::NEG_INFINITY, mid);
    let mut values = Vec::with_capacity(2 * m as usize + 1);
    for j in -m..=m {
        let u = mid + j as f64 * h;
        let v = mass(u);
        values.push((u, v));
        if v > best.0 {
            best = (v, u);
        }
    }
    let tie = 1e-12 * best.0.abs().max(f64::MIN_POSITIVE);
    let (mut value, mut argmax) = values
        .iter()
        .filter(|(_, v)| *v >= best.0 - tie)
        .min_by(|a, b| a.0.abs().total_cmp(&b.0.abs()))
        .map(|(u, v)| (*v, *u))
        .expect("nonempty grid");
    let refined = golden_max(&mass, argmax - h, argmax + h);
    if refined.1 > value + tie {
        argmax = refined.0;
        value = refined.1;
    }
    Ok(OneStepValue { value: value.min(1.0), argmax })
}

fn golden_max(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    let u = 0.5 * (a + b);
    (u, f(u))
}

/// A named member of the candidate family of an equivalence check.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub name: String,
    pub model: NoiseModel,
}

impl Candidate {
    pub fn new(name: impl Into<String>, model: NoiseModel) -> Self {
        Self { name: name.into(), model }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateScore {
    pub name: String,
    pub one_step: OneStepValue,
    pub entropy: f64,
    pub variance: f64,
}

#[derive(Debug, Clone)]
pub struct EquivalenceReport {
    pub scores: Vec<CandidateScore>,
    /// `(name, reason)` of candidates that failed the constraint checks.
    pub excluded: Vec<(String, String)>,
    /// Indices into `scores`, one-step value ascending.
    pub by_one_step: Vec<usize>,
    /// Indices into `scores`, entropy descending.
    pub by_entropy: Vec<usize>,
    /// Index of the uniform design among the scores, if present.
    pub uniform: Option<usize>,
    pub uniform_minimizes_one_step: bool,
    pub uniform_maximizes_entropy: bool,
    /// Pairs of candidates indistinguishable on both criteria.
    pub ties: Vec<(usize, usize)>,
}

impl EquivalenceReport {
    /// Both rankings put the uniform design first.
    pub fn holds(&self) -> bool {
        self.uniform_minimizes_one_step && self.uniform_maximizes_entropy
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1e-300)
}

/// Ranks the feasible candidates by one-step value and by entropy.
pub fn equivalence_check(sigma: f64, r: f64, candidates: &[Candidate]) -> Result<EquivalenceReport> {
    if !(sigma > 0.0) || !(r > 0.0) {
        return Err(Error::Domain("sigma and r must be positive".into()));
    }
    let uniform_ref = analytic_design(sigma)?;
    let mut scores = Vec::new();
    let mut excluded = Vec::new();
    let mut uniform = None;
    for c in candidates {
        if c.model.dim() != 1 {
            excluded.push((c.name.clone(), "not one-dimensional".into()));
            continue;
        }
        if c.model.support_box().is_none() {
            excluded.push((c.name.clone(), "unbounded support".into()));
            continue;
        }
        let mean = c.model.mean()[0];
        let var = c.model.covariance()[(0, 0)];
        if mean.abs() > 1e-6 * sigma {
            excluded.push((c.name.clone(), format!("mean {mean} is not zero")));
            continue;
        }
        if (var - sigma * sigma).abs() > 1e-3 * sigma * sigma {
            excluded.push((c.name.clone(), format!("variance {var} differs from {}", sigma * sigma)));
            continue;
        }
        if uniform.is_none() && c.model == uniform_ref {
            uniform = Some(scores.len());
        }
        scores.push(CandidateScore {
            name: c.name.clone(),
            one_step: one_step_value(&c.model, r)?,
            entropy: c.model.differential_entropy()?,
            variance: var,
        });
    }
    let mut by_one_step: Vec<usize> = (0..scores.len()).collect();
    by_one_step.sort_by(|&a, &b| scores[a].one_step.value.total_cmp(&scores[b].one_step.value));
    let mut by_entropy: Vec<usize> = (0..scores.len()).collect();
    by_entropy.sort_by(|&a, &b| scores[b].entropy.total_cmp(&scores[a].entropy));
    let mut ties = Vec::new();
    for a in 0..scores.len() {
        for b in (a + 1)..scores.len() {
            if close(scores[a].one_step.value, scores[b].one_step.value)
                && close(scores[a].entropy, scores[b].entropy)
            {
                ties.push((a, b));
            }
        }
    }
    let first_one_step = |i: usize| {
        by_one_step
            .first()
            .is_some_and(|&f| f == i || close(scores[f].one_step.value, scores[i].one_step.value))
    };
    let first_entropy = |i: usize| {
        by_entropy
            .first()
            .is_some_and(|&f| f == i || close(scores[f].entropy, scores[i].entropy))
    };
    Ok(EquivalenceReport {
        uniform_minimizes_one_step: uniform.is_some_and(first_one_step),
        uniform_maximizes_entropy: uniform.is_some_and(first_entropy),
        scores,
        excluded,
        by_one_step,
        by_entropy,
        uniform,
        ties,
    })
}

/// Grid density on `[lo, hi]` with `cells` cells whose masses come from `cdf`.
pub fn grid_density_from_cdf(
    lo: f64,
    hi: f64,
    cells: usize,
    cdf: impl Fn(f64) -> f64,
) -> Result<NoiseModel> {
    let partition = GridPartition::cubic(vec![lo], vec![hi], (hi - lo) / cells as f64)?;
    let edges = partition.axis_edges(0);
    let mut w: Vec<f64> = edges.windows(2).map(|e| (cdf(e[1]) - cdf(e[0])).max(0.0)).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w.push(0.0);
    let weights = DiscreteDist::on_partition(w, &partition)?;
    NoiseModel::grid_density(partition, weights)
}

/// Variance of `N(0, s²)` truncated to `[−cap, cap]`.
fn truncated_normal_variance(s: f64, cap: f64) -> f64 {
    let a = cap / s;
    let z = 2.0 * normal_cdf(a) - 1.0;
    s * s * (1.0 - 2.0 * a * normal_pdf(a) / z)
}

/// Gaussian truncated to `[−cap, cap]` with its scale chosen so the variance is
/// exactly `σ²`; needs `cap > √3σ`.
pub fn truncated_gaussian_candidate(sigma: f64, cap: f64, cells: usize) -> Result<NoiseModel> {
    if !(cap > SQRT3 * sigma) {
        return Err(Error::Infeasible("truncated gaussian needs cap > sqrt(3) sigma".into()));
    }
    let target = sigma * sigma;
    let (mut lo, mut hi) = (1e-3 * sigma, sigma);
    while truncated_normal_variance(hi, cap) < target {
        hi *= 2.0;
        if hi > 1e6 * sigma {
            return Err(Error::NonConvergence { iterations: 0, residuals: [0.0; 3] });
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if truncated_normal_variance(mid, cap) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let s = 0.5 * (lo + hi);
    grid_density_from_cdf(-cap, cap, cells, |x| normal_interval(-cap / s, x / s))
}

/// Symmetric triangular law on `[−√6σ, √6σ]` (variance `σ²`).
pub fn triangle_candidate(sigma: f64, cells: usize) -> Result<NoiseModel> {
    let a = 6f64.sqrt() * sigma;
    let cdf = move |x: f64| {
        if x <= -a {
            0.0
        } else if x <= 0.0 {
            (x + a).powi(2) / (2.0 * a * a)
        } else if x < a {
            1.0 - (a - x).powi(2) / (2.0 * a * a)
        } else {
            1.0
        }
    };
    grid_density_from_cdf(-a, a, cells, cdf)
}

/// The three-member family: uniform design, variance-matched truncated
/// Gaussian on `[−cap, cap]`, symmetric triangle.
pub fn standard_family(sigma: f64, cap: f64, cells: usize) -> Result<Vec<Candidate>> {
    Ok(vec![
        Candidate::new("uniform", analytic_design(sigma)?),
        Candidate::new("truncated_gaussian", truncated_gaussian_candidate(sigma, cap, cells)?),
        Candidate::new("triangle", triangle_candidate(sigma, cells)?),
    ])
}
