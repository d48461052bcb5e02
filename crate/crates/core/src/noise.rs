//! Noise laws `W` with density `q`.

use std::f64::consts::{E, PI};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};
use crate::partition::{sample_in_cell, DiscreteDist, GridPartition};
use crate::rng;
use crate::special::{normal_cdf, normal_interval, normal_quantile};

/// Monte-Carlo budget used for non-analytic box probabilities unless overridden.
pub const DEFAULT_BOX_BUDGET: usize = 100_000;

/// Mass of an ε-box together with the Monte-Carlo standard error (zero when exact).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxMass {
    pub probability: f64,
    /// `ln probability`, kept separately so tail masses never underflow to `-inf`.
    pub ln_probability: f64,
    pub std_error: f64,
}

impl BoxMass {
    pub fn exact(probability: f64) -> Self {
        let p = probability.clamp(0.0, 1.0);
        Self { probability: p, ln_probability: p.ln(), std_error: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    chol: DMatrix<f64>,
    // row-major precision matrix, used on the hot density path
    precision: Vec<f64>,
    log_norm: f64,
    log_det: f64,
    diagonal: bool,
}

impl Gaussian {
    pub fn new(mean: Vec<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(Error::Contract("gaussian needs dimension >= 1".into()));
        }
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, got: cov.nrows() });
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Domain("gaussian parameters must be finite".into()));
        }
        let scale = cov.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        for i in 0..d {
            for j in (i + 1)..d {
                if (cov[(i, j)] - cov[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::Domain("covariance is not symmetric".into()));
                }
            }
        }
        let chol = cov
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Domain("covariance is not positive definite".into()))?;
        let l = chol.l();
        let log_det: f64 = 2.0 * (0..d).map(|i| l[(i, i)].ln()).sum::<f64>();
        if !log_det.is_finite() {
            return Err(Error::Domain("covariance is singular".into()));
        }
        let inv = chol.inverse();
        let precision = (0..d * d).map(|k| inv[(k / d, k % d)]).collect();
        let diagonal = (0..d).all(|i| (0..d).all(|j| i == j || cov[(i, j)] == 0.0));
        Ok(Self {
            mean: DVector::from_vec(mean),
            log_norm: -0.5 * (d as f64 * (2.0 * PI).ln() + log_det),
            log_det,
            cov,
            chol: l,
            precision,
            diagonal,
        })
    }

    pub fn isotropic(mean: Vec<f64>, variance: f64) -> Result<Self> {
        let d = mean.len();
        Self::new(mean, DMatrix::from_diagonal_element(d, d, variance))
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        self.mean.as_slice()
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn is_diagonal(&self) -> bool {
        self.diagonal
    }

    fn std_dev(&self, axis: usize) -> f64 {
        self.cov[(axis, axis)].sqrt()
    }

    fn log_density_unchecked(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        let mu = self.mean.as_slice();
        let mut quad = 0.0;
        for i in 0..d {
            let di = x[i] - mu[i];
            let row = &self.precision[i * d..(i + 1) * d];
            let mut acc = 0.0;
            for j in 0..d {
                acc += row[j] * (x[j] - mu[j]);
            }
            quad += di * acc;
        }
        self.log_norm - 0.5 * quad
    }

    fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let d = self.dim();
        let mut z = [0.0f64; 8];
        let mut heap;
        let z: &mut [f64] = if d <= 8 {
            &mut z[..d]
        } else {
            heap = vec![0.0; d];
            &mut heap
        };
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        for i in 0..d {
            let mut acc = self.mean[i];
            for j in 0..=i {
                acc += self.chol[(i, j)] * z[j];
            }
            out[i] = acc;
        }
    }

    fn axis_interval_mass(&self, axis: usize, a: f64, b: f64) -> f64 {
        let s = self.std_dev(axis);
        let m = self.mean[axis];
        normal_interval((a - m) / s, (b - m) / s)
    }

    /// Monte-Carlo ε-box mass for a correlated Gaussian by sequential
    /// conditioning on the Cholesky factor (separation of variables): each draw
    /// multiplies the exact conditional interval masses along a path of
    /// truncated-normal draws. Unbiased and strictly positive wherever the box
    /// has mass, so tail boxes never score zero.
    fn box_probability_mc<R: Rng + ?Sized>(
        &self,
        center: &[f64],
        eps: f64,
        budget: usize,
        rng: &mut R,
    ) -> BoxMass {
        let d = self.dim();
        let n = budget as f64;
        let lo: Vec<f64> = (0..d).map(|i| center[i] - eps - self.mean[i]).collect();
        let hi: Vec<f64> = (0..d).map(|i| center[i] + eps - self.mean[i]).collect();
        let mut y = vec![0.0; d];
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..budget {
            let mut f = 1.0;
            for i in 0..d {
                let shift: f64 = (0..i).map(|j| self.chol[(i, j)] * y[j]).sum();
                let l = self.chol[(i, i)];
                let (alpha, beta) = ((lo[i] - shift) / l, (hi[i] - shift) / l);
                let (mass, draw) = truncated_normal_step(alpha, beta, rng.random::<f64>());
                f *= mass;
                if f == 0.0 {
                    break;
                }
                y[i] = draw;
            }
            sum += f;
            sum_sq += f * f;
        }
        let p = (sum / n).min(1.0);
        let var = ((sum_sq / n - p * p) * n / (n - 1.0).max(1.0)).max(0.0);
        BoxMass { probability: p, ln_probability: p.ln(), std_error: (var / n).sqrt() }
    }
}

/// Mass of `[α, β]` under a standard normal and the draw `Φ⁻¹(Φ(α) + u·mass)`,
/// evaluated in the lower tail by symmetry.
fn truncated_normal_step(alpha: f64, beta: f64, u: f64) -> (f64, f64) {
    if alpha > 0.0 {
        let (m, y) = truncated_normal_step(-beta, -alpha, 1.0 - u);
        return (m, -y);
    }
    let mass = normal_interval(alpha, beta);
    if mass == 0.0 {
        return (0.0, alpha);
    }
    let p = (normal_cdf(alpha) + u * mass).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
    (mass, normal_quantile(p).clamp(alpha, beta))
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniformBox {
    center: Vec<f64>,
    half_widths: Vec<f64>,
}

impl UniformBox {
    pub fn new(center: Vec<f64>, half_widths: Vec<f64>) -> Result<Self> {
        check_dim(center.len(), half_widths.len())?;
        if center.is_empty() {
            return Err(Error::Contract("uniform box needs dimension >= 1".into()));
        }
        if half_widths.iter().any(|h| !(*h > 0.0) || !h.is_finite()) {
            return Err(Error::Domain("uniform half-widths must be strictly positive".into()));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(Error::Domain("uniform center must be finite".into()));
        }
        Ok(Self { center, half_widths })
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn half_widths(&self) -> &[f64] {
        &self.half_widths
    }

    fn axis_interval_mass(&self, axis: usize, a: f64, b: f64) -> f64 {
        let lo = self.center[axis] - self.half_widths[axis];
        let hi = self.center[axis] + self.half_widths[axis];
        let overlap = (b.min(hi) - a.max(lo)).max(0.0);
        (overlap / (2.0 * self.half_widths[axis])).min(1.0)
    }
}

/// Piecewise-constant density: cell masses on a grid, uniform within each cell.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    partition: GridPartition,
    weights: DiscreteDist,
    cumulative: Vec<f64>,
}

impl GridDensity {
    /// The overflow cell must carry no mass: it has no finite volume.
    pub fn new(partition: GridPartition, weights: DiscreteDist) -> Result<Self> {
        check_dim(partition.len(), weights.len())?;
        let overflow = weights.weights()[partition.overflow_index()];
        if overflow > 1e-12 {
            return Err(Error::Domain(format!(
                "grid density puts mass {overflow} on the unbounded overflow cell"
            )));
        }
        let mut acc = 0.0;
        let cumulative = weights.weights()[..partition.bounded_cells()]
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        Ok(Self { partition, weights, cumulative })
    }

    pub fn partition(&self) -> &GridPartition {
        &self.partition
    }

    pub fn weights(&self) -> &DiscreteDist {
        &self.weights
    }

    fn density_unchecked(&self, x: &[f64]) -> f64 {
        let i = self.partition.label_unchecked(x);
        if i == self.partition.overflow_index() {
            0.0
        } else {
            self.weights.weights()[i] / self.partition.cell_volume(i)
        }
    }

    /// Exact mass of the axis-aligned rectangle `[lo, hi]`.
    pub(crate) fn rectangle_mass(&self, lo: &[f64], hi: &[f64]) -> f64 {
        let p = &self.partition;
        let d = p.dim();
        // per-axis slab ranges and overlap fractions
        let mut ranges = Vec::with_capacity(d);
        for j in 0..d {
            let w = p.cell_width()[j];
            let o = p.origin()[j];
            let n = p.counts()[j];
            let a = ((lo[j] - o) / w).floor().max(0.0);
            let b = ((hi[j] - o) / w).floor().min(n as f64 - 1.0);
            if b < a || hi[j] <= lo[j] {
                return 0.0;
            }
            let first = a as usize;
            let fracs: Vec<f64> = (first..=b as usize)
                .map(|s| {
                    let c0 = o + s as f64 * w;
                    let c1 = c0 + w;
                    ((hi[j].min(c1) - lo[j].max(c0)) / w).clamp(0.0, 1.0)
                })
                .collect();
            ranges.push((first, fracs));
        }
        let mut total = 0.0;
        let mut idx = vec![0usize; d];
        let weights = self.weights.weights();
        loop {
            let mut frac = 1.0;
            let mut multi = [0usize; 8];
            let mut heap;
            let multi: &mut [usize] = if d <= 8 {
                &mut multi[..d]
            } else {
                heap = vec![0; d];
                &mut heap
            };
            for j in 0..d {
                frac *= ranges[j].1[idx[j]];
                multi[j] = ranges[j].0 + idx[j];
            }
            if frac > 0.0 {
                total += frac * weights[p.flat_index(multi)];
            }
            // odometer increment
            let mut j = d;
            loop {
                if j == 0 {
                    return total.min(1.0);
                }
                j -= 1;
                idx[j] += 1;
                if idx[j] < ranges[j].1.len() {
                    break;
                }
                idx[j] = 0;
            }
        }
    }

    fn moments(&self) -> (Vec<f64>, DMatrix<f64>) {
        let p = &self.partition;
        let d = p.dim();
        let w = self.weights.weights();
        let mut mean = vec![0.0; d];
        let mut second = DMatrix::zeros(d, d);
        for i in 0..p.bounded_cells() {
            if w[i] == 0.0 {
                continue;
            }
            let c = p.center(i).expect("bounded");
            for a in 0..d {
                mean[a] += w[i] * c[a];
                for b in 0..d {
                    let within = if a == b { p.cell_width()[a].powi(2) / 12.0 } else { 0.0 };
                    second[(a, b)] += w[i] * (c[a] * c[b] + within);
                }
            }
        }
        let m = DVector::from_column_slice(&mean);
        let cov = second - &m * m.transpose();
        (mean, cov)
    }
}

/// A noise law with a density.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseModel {
    Gaussian(Gaussian),
    UniformBox(UniformBox),
    GridDensity(GridDensity),
}

impl From<Gaussian> for NoiseModel {
    fn from(g: Gaussian) -> Self {
        NoiseModel::Gaussian(g)
    }
}

impl From<UniformBox> for NoiseModel {
    fn from(u: UniformBox) -> Self {
        NoiseModel::UniformBox(u)
    }
}

impl From<GridDensity> for NoiseModel {
    fn from(g: GridDensity) -> Self {
        NoiseModel::GridDensity(g)
    }
}

impl NoiseModel {
    pub fn gaussian(mean: Vec<f64>, cov: DMatrix<f64>) -> Result<Self> {
        Gaussian::new(mean, cov).map(Into::into)
    }

    /// `N(0, σ² I_d)`.
    pub fn standard_gaussian(dim: usize, variance: f64) -> Result<Self> {
        Gaussian::isotropic(vec![0.0; dim], variance).map(Into::into)
    }

    pub fn uniform_box(center: Vec<f64>, half_widths: Vec<f64>) -> Result<Self> {
        UniformBox::new(center, half_widths).map(Into::into)
    }

    pub fn grid_density(partition: GridPartition, weights: DiscreteDist) -> Result<Self> {
        GridDensity::new(partition, weights).map(Into::into)
    }

    pub fn dim(&self) -> usize {
        match self {
            NoiseModel::Gaussian(g) => g.dim(),
            NoiseModel::UniformBox(u) => u.center.len(),
            NoiseModel::GridDensity(g) => g.partition.dim(),
        }
    }

    /// Diagonal Gaussians and uniform boxes factor over axes.
    pub fn is_product_form(&self) -> bool {
        match self {
            NoiseModel::Gaussian(g) => g.is_diagonal(),
            NoiseModel::UniformBox(_) => true,
            NoiseModel::GridDensity(_) => false,
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        match self {
            NoiseModel::Gaussian(g) => g.mean().to_vec(),
            NoiseModel::UniformBox(u) => u.center.clone(),
            NoiseModel::GridDensity(g) => g.moments().0,
        }
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        match self {
            NoiseModel::Gaussian(g) => g.cov.clone(),
            NoiseModel::UniformBox(u) => DMatrix::from_diagonal(&DVector::from_iterator(
                u.half_widths.len(),
                u.half_widths.iter().map(|h| h * h / 3.0),
            )),
            NoiseModel::GridDensity(g) => g.moments().1,
        }
    }

    /// Bounding box of the support; `None` when unbounded.
    pub fn support_box(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        match self {
            NoiseModel::Gaussian(_) => None,
            NoiseModel::UniformBox(u) => Some((
                u.center.iter().zip(&u.half_widths).map(|(c, h)| c - h).collect(),
                u.center.iter().zip(&u.half_widths).map(|(c, h)| c + h).collect(),
            )),
            NoiseModel::GridDensity(g) => {
                let p = &g.partition;
                let d = p.dim();
                let mut lo = vec![f64::INFINITY; d];
                let mut hi = vec![f64::NEG_INFINITY; d];
                for (i, w) in g.weights.weights()[..p.bounded_cells()].iter().enumerate() {
                    if *w > 0.0 {
                        let (a, b) = p.cell_bounds(i).expect("bounded");
                        for j in 0..d {
                            lo[j] = lo[j].min(a[j]);
                            hi[j] = hi[j].max(b[j]);
                        }
                    }
                }
                Some((lo, hi))
            }
        }
    }

    /// ∞-norm diameter of the support (infinite for Gaussians).
    pub fn support_diameter(&self) -> f64 {
        match self.support_box() {
            None => f64::INFINITY,
            Some((lo, hi)) => lo.iter().zip(&hi).map(|(a, b)| b - a).fold(0.0, f64::max),
        }
    }

    /// `q(point)`.
    pub fn density(&self, point: &[f64]) -> Result<f64> {
        check_dim(self.dim(), point.len())?;
        Ok(self.density_unchecked(point))
    }

    pub fn log_density(&self, point: &[f64]) -> Result<f64> {
        check_dim(self.dim(), point.len())?;
        Ok(match self {
            NoiseModel::Gaussian(g) => g.log_density_unchecked(point),
            _ => self.density_unchecked(point).ln(),
        })
    }

    pub(crate) fn density_unchecked(&self, point: &[f64]) -> f64 {
        match self {
            NoiseModel::Gaussian(g) => g.log_density_unchecked(point).exp(),
            NoiseModel::UniformBox(u) => {
                let inside = point
                    .iter()
                    .zip(u.center.iter().zip(&u.half_widths))
                    .all(|(x, (c, h))| (x - c).abs() <= *h);
                if inside {
                    1.0 / u.half_widths.iter().map(|h| 2.0 * h).product::<f64>()
                } else {
                    0.0
                }
            }
            NoiseModel::GridDensity(g) => g.density_unchecked(point),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.sample_into(rng, &mut out);
        out
    }

    pub(crate) fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match self {
            NoiseModel::Gaussian(g) => g.sample_into(rng, out),
            NoiseModel::UniformBox(u) => {
                for (j, o) in out.iter_mut().enumerate() {
                    *o = u.center[j] + u.half_widths[j] * (2.0 * rng.random::<f64>() - 1.0);
                }
            }
            NoiseModel::GridDensity(g) => {
                let total = *g.cumulative.last().unwrap_or(&1.0);
                let target = rng.random::<f64>() * total;
                let mut i = g.cumulative.partition_point(|c| *c <= target);
                i = i.min(g.cumulative.len() - 1);
                // skip zero-mass cells reached by rounding
                while g.weights.weights()[i] == 0.0 && i > 0 {
                    i -= 1;
                }
                sample_in_cell(&g.partition, i, rng, out);
            }
        }
    }

    /// Mass of `[a, b]` along one axis; only meaningful for product-form models
    /// (any 1-D model qualifies).
    pub(crate) fn axis_interval_mass(&self, axis: usize, a: f64, b: f64) -> f64 {
        match self {
            NoiseModel::Gaussian(g) => g.axis_interval_mass(axis, a, b),
            NoiseModel::UniformBox(u) => u.axis_interval_mass(axis, a, b),
            NoiseModel::GridDensity(g) => {
                debug_assert_eq!(g.partition.dim(), 1);
                g.rectangle_mass(&[a], &[b])
            }
        }
    }

    /// Exact mass of `[a, b]` for a one-dimensional model.
    pub fn interval_mass(&self, a: f64, b: f64) -> Result<f64> {
        check_dim(1, self.dim())?;
        Ok(self.axis_interval_mass(0, a, b))
    }

    /// `P(‖W − center‖_∞ ≤ eps)`.
    ///
    /// Exact for product-form models and grid densities; correlated Gaussians
    /// use `budget` Monte-Carlo draws from `rng` and report a standard error.
    pub fn box_probability<R: Rng + ?Sized>(
        &self,
        center: &[f64],
        eps: f64,
        budget: usize,
        rng: &mut R,
    ) -> Result<BoxMass> {
        check_dim(self.dim(), center.len())?;
        if !(eps > 0.0) {
            return Err(Error::Contract(format!("eps must be positive, got {eps}")));
        }
        match self {
            NoiseModel::Gaussian(g) if !g.is_diagonal() => {
                if budget == 0 {
                    return Err(Error::Config(
                        "box probability of a correlated gaussian needs a Monte-Carlo budget > 0"
                            .into(),
                    ));
                }
                Ok(g.box_probability_mc(center, eps, budget, rng))
            }
            NoiseModel::GridDensity(g) => {
                let lo: Vec<f64> = center.iter().map(|c| c - eps).collect();
                let hi: Vec<f64> = center.iter().map(|c| c + eps).collect();
                Ok(BoxMass::exact(g.rectangle_mass(&lo, &hi)))
            }
            NoiseModel::Gaussian(g) => {
                // log of the product, so tail boxes keep their magnitude
                let ln_p: f64 = center
                    .iter()
                    .enumerate()
                    .map(|(j, c)| g.axis_interval_mass(j, c - eps, c + eps).ln())
                    .sum();
                let p = ln_p.exp();
                Ok(BoxMass { probability: p, ln_probability: ln_p.min(0.0), std_error: 0.0 })
            }
            NoiseModel::UniformBox(u) => {
                let p: f64 = center
                    .iter()
                    .enumerate()
                    .map(|(j, c)| u.axis_interval_mass(j, c - eps, c + eps))
                    .product();
                Ok(BoxMass::exact(p))
            }
        }
    }

    /// Differential entropy `H_d(q)` in nats.
    pub fn differential_entropy(&self) -> Result<f64> {
        match self {
            NoiseModel::Gaussian(g) => {
                let d = g.dim() as f64;
                Ok(0.5 * (d * (2.0 * PI * E).ln() + g.log_det))
            }
            NoiseModel::UniformBox(u) => {
                Ok(u.half_widths.iter().map(|h| (2.0 * h).ln()).sum())
            }
            NoiseModel::GridDensity(g) => {
                let vol = g.partition.cell_volume(0);
                Ok(g.weights.weights()[..g.partition.bounded_cells()]
                    .iter()
                    .filter(|w| **w > 0.0)
                    .map(|w| w * (vol / w).ln())
                    .sum())
            }
        }
    }

    /// Monte-Carlo estimate `-(1/n) Σ ln q(x_i)` with its standard error.
    pub fn mc_differential_entropy(&self, n: usize, seed: u64) -> Result<(f64, f64)> {
        if n < 100 {
            return Err(Error::Config(format!("entropy estimate needs n >= 100, got {n}")));
        }
        let mut stream = rng::stream(seed);
        let mut x = vec![0.0; self.dim()];
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            self.sample_into(&mut stream, &mut x);
            let l = match self {
                NoiseModel::Gaussian(g) => g.log_density_unchecked(&x),
                _ => self.density_unchecked(&x).ln(),
            };
            if !l.is_finite() {
                return Err(Error::Inconsistent(
                    "drawn sample has zero density (support mismatch)".into(),
                ));
            }
            sum -= l;
            sum_sq += l * l;
        }
        let nf = n as f64;
        let mean = sum / nf;
        let var = ((sum_sq / nf - mean * mean) * nf / (nf - 1.0)).max(0.0);
        Ok((mean, (var / nf).sqrt()))
    }
}
