//! Axis-aligned grid partitions of ℝ^d and distributions over their cells.
//!
//! A [`GridPartition`] tiles a finite box with equal cells and adds a single
//! overflow cell that covers the rest of the space, so every point gets
//! exactly one label. Cells are closed on their lower faces and open on
//! their upper faces.

use std::hash::{Hash, Hasher};

use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::noise::NoiseModel;
use crate::rng;

/// Mass captured inside the default partition bounds of a Gaussian (±6σ).
pub const DEFAULT_GAUSSIAN_HALF_SPAN: f64 = 6.0;

#[derive(Debug, Clone, PartialEq)]
pub struct GridPartition {
    origin: Vec<f64>,
    cell_width: Vec<f64>,
    counts: Vec<usize>,
    strides: Vec<usize>,
    bounded: usize,
}

impl GridPartition {
    /// Builds the grid starting at `lower` whose cells cover `[lower, upper)`.
    /// The number of cells per axis is `ceil((upper - lower) / width)`, so the
    /// last cell may extend past `upper`.
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, cell_width: Vec<f64>) -> Result<Self> {
        let d = lower.len();
        if d == 0 {
            return Err(Error::Contract("partition needs at least one axis".into()));
        }
        check_dim(d, upper.len())?;
        check_dim(d, cell_width.len())?;
        let mut counts = Vec::with_capacity(d);
        for j in 0..d {
            let (lo, hi, w) = (lower[j], upper[j], cell_width[j]);
            if !(lo.is_finite() && hi.is_finite() && w.is_finite()) {
                return Err(Error::Contract(format!("axis {j}: bounds and width must be finite")));
            }
            if w <= 0.0 || hi <= lo {
                return Err(Error::Contract(format!(
                    "axis {j}: need width > 0 and upper > lower (got [{lo}, {hi}), width {w})"
                )));
            }
            let ratio = (hi - lo) / w;
            // absorb rounding in ratios that are integral in exact arithmetic
            let n = (ratio - 1e-9 * ratio.max(1.0)).ceil().max(1.0);
            if n > 1e8 {
                return Err(Error::Contract(format!("axis {j}: {n} cells is too many")));
            }
            counts.push(n as usize);
        }
        let mut strides = vec![1usize; d];
        for j in (0..d.saturating_sub(1)).rev() {
            strides[j] = strides[j + 1] * counts[j + 1];
        }
        let bounded = counts
            .iter()
            .try_fold(1usize, |acc, &c| acc.checked_mul(c))
            .filter(|&n| n <= 50_000_000)
            .ok_or_else(|| Error::Contract("partition has too many cells".into()))?;
        Ok(Self { origin: lower, cell_width, counts, strides, bounded })
    }

    /// Cubic grid: the same width on every axis.
    pub fn cubic(lower: Vec<f64>, upper: Vec<f64>, width: f64) -> Result<Self> {
        let d = lower.len();
        Self::new(lower, upper, vec![width; d])
    }

    /// Grid with cubic cells of the given width whose bounds capture the bulk
    /// of `model`'s mass: ±6σ per axis for Gaussians, the support box otherwise.
    /// Bounds are aligned so that the grid is symmetric about the model's center.
    pub fn for_model(model: &NoiseModel, width: f64) -> Result<Self> {
        if width <= 0.0 || !width.is_finite() {
            return Err(Error::Contract(format!("cell width must be positive, got {width}")));
        }
        let (lo, hi) = match model.support_box() {
            Some(b) => b,
            None => {
                let mean = model.mean();
                let cov = model.covariance();
                let d = model.dim();
                let lo = (0..d)
                    .map(|j| mean[j] - DEFAULT_GAUSSIAN_HALF_SPAN * cov[(j, j)].sqrt())
                    .collect();
                let hi = (0..d)
                    .map(|j| mean[j] + DEFAULT_GAUSSIAN_HALF_SPAN * cov[(j, j)].sqrt())
                    .collect();
                (lo, hi)
            }
        };
        // widen to a whole number of cells centred on the box
        let mut lower = Vec::with_capacity(lo.len());
        let mut upper = Vec::with_capacity(lo.len());
        for (a, b) in lo.iter().zip(hi.iter()) {
            let span = b - a;
            let n = (span / width - 1e-9).ceil().max(1.0);
            let pad = 0.5 * (n * width - span);
            lower.push(a - pad);
            upper.push(b + pad);
        }
        Self::cubic(lower, upper, width)
    }

    pub fn dim(&self) -> usize {
        self.origin.len()
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn cell_width(&self) -> &[f64] {
        &self.cell_width
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// Upper corner of the bounded region (`origin + counts * width`).
    pub fn upper(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|j| self.origin[j] + self.counts[j] as f64 * self.cell_width[j])
            .collect()
    }

    /// Number of bounded cells.
    pub fn bounded_cells(&self) -> usize {
        self.bounded
    }

    /// Total number of cells including the overflow cell.
    pub fn len(&self) -> usize {
        self.bounded + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn overflow_index(&self) -> usize {
        self.bounded
    }

    /// ∞-norm diameter over bounded cells.
    pub fn diameter(&self) -> f64 {
        self.cell_width.iter().copied().fold(0.0, f64::max)
    }

    pub fn cell_volume(&self, index: usize) -> f64 {
        if index >= self.bounded {
            f64::INFINITY
        } else {
            self.cell_width.iter().product()
        }
    }

    /// Index of the slab containing `x` along `axis`, or `None` outside the grid.
    pub(crate) fn axis_slot(&self, axis: usize, x: f64) -> Option<usize> {
        let lo = self.origin[axis];
        let w = self.cell_width[axis];
        let n = self.counts[axis];
        if !(x >= lo) {
            return None;
        }
        let mut j = ((x - lo) / w).floor();
        if !j.is_finite() || j >= n as f64 + 1.0 {
            return None;
        }
        // make the arithmetic agree with the edges reported by `cell_bounds`
        if x < lo + j * w {
            j -= 1.0;
        } else if x >= lo + (j + 1.0) * w {
            j += 1.0;
        }
        if j < 0.0 || j >= n as f64 {
            None
        } else {
            Some(j as usize)
        }
    }

    /// The label function `Θ_Σ`.
    pub fn label(&self, point: &[f64]) -> Result<usize> {
        check_dim(self.dim(), point.len())?;
        Ok(self.label_unchecked(point))
    }

    pub(crate) fn label_unchecked(&self, point: &[f64]) -> usize {
        let mut index = 0;
        for (axis, &x) in point.iter().enumerate() {
            match self.axis_slot(axis, x) {
                Some(j) => index += j * self.strides[axis],
                None => return self.bounded,
            }
        }
        index
    }

    pub(crate) fn multi_index(&self, index: usize) -> Vec<usize> {
        (0..self.dim())
            .map(|j| (index / self.strides[j]) % self.counts[j])
            .collect()
    }

    pub(crate) fn flat_index(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.strides).map(|(m, s)| m * s).sum()
    }

    /// Lower and upper corners of a bounded cell; `None` for the overflow cell.
    pub fn cell_bounds(&self, index: usize) -> Option<(Vec<f64>, Vec<f64>)> {
        if index >= self.bounded {
            return None;
        }
        let m = self.multi_index(index);
        let lo: Vec<f64> = (0..self.dim())
            .map(|j| self.origin[j] + m[j] as f64 * self.cell_width[j])
            .collect();
        let hi = (0..self.dim())
            .map(|j| self.origin[j] + (m[j] + 1) as f64 * self.cell_width[j])
            .collect();
        Some((lo, hi))
    }

    pub fn center(&self, index: usize) -> Option<Vec<f64>> {
        self.cell_bounds(index)
            .map(|(lo, hi)| lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect())
    }

    /// Edges of the slabs along one axis (`counts[axis] + 1` values).
    pub fn axis_edges(&self, axis: usize) -> Vec<f64> {
        (0..=self.counts[axis])
            .map(|j| self.origin[axis] + j as f64 * self.cell_width[axis])
            .collect()
    }

    /// Fingerprint used to detect distributions built on different grids.
    pub fn signature(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for v in self.origin.iter().chain(&self.cell_width) {
            v.to_bits().hash(&mut h);
        }
        self.counts.hash(&mut h);
        h.finish()
    }
}

/// Probability vector over the cells of a partition (overflow cell last).
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDist {
    weights: Vec<f64>,
    signature: Option<u64>,
}

impl DiscreteDist {
    /// Weights must be nonnegative and sum to one within `1e-10`.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Contract("empty distribution".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(Error::Contract(format!("invalid weight {w}")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::Contract(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { weights, signature: None })
    }

    /// Attaches the distribution to `partition`; the length must match.
    pub fn on_partition(weights: Vec<f64>, partition: &GridPartition) -> Result<Self> {
        check_dim(partition.len(), weights.len())?;
        let mut d = Self::new(weights)?;
        d.signature = Some(partition.signature());
        Ok(d)
    }

    pub fn point_mass(partition: &GridPartition, index: usize) -> Result<Self> {
        if index >= partition.len() {
            return Err(Error::Contract(format!("cell {index} out of range")));
        }
        let mut w = vec![0.0; partition.len()];
        w[index] = 1.0;
        Self::on_partition(w, partition)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn support_size(&self) -> usize {
        self.weights.iter().filter(|w| **w > 0.0).count()
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::Contract(format!(
                "distributions over {} and {} cells",
                self.len(),
                other.len()
            )));
        }
        match (self.signature, other.signature) {
            (Some(a), Some(b)) if a != b => {
                Err(Error::Contract("distributions live on different partitions".into()))
            }
            _ => Ok(()),
        }
    }

    /// Shannon entropy in nats, with `0 ln 0 = 0`.
    pub fn shannon_entropy(&self) -> f64 {
        -self
            .weights
            .iter()
            .filter(|w| **w > 0.0)
            .map(|w| w * w.ln())
            .sum::<f64>()
    }

    /// `D_KL(self ‖ other)`; `+∞` when `other` misses mass of `self`.
    pub fn kl_divergence(&self, other: &Self) -> Result<f64> {
        self.check_compatible(other)?;
        let mut total = 0.0;
        for (&p, &r) in self.weights.iter().zip(&other.weights) {
            if p == 0.0 {
                continue;
            }
            if r == 0.0 {
                return Ok(f64::INFINITY);
            }
            total += p * (p / r).ln();
        }
        // rounding can leave tiny negatives for equal inputs
        Ok(total.max(0.0))
    }

    pub fn total_variation(&self, other: &Self) -> Result<f64> {
        self.check_compatible(other)?;
        Ok(0.5
            * self
                .weights
                .iter()
                .zip(&other.weights)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>())
    }
}

/// How cell masses of a continuous law are obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DiscretizeMethod {
    /// Exact per-cell integrals for product-form Gaussians, uniform boxes and
    /// grid densities; Gauss–Legendre quadrature for correlated 2-D Gaussians.
    Analytic,
    /// Sample frequencies from `samples` seeded draws.
    MonteCarlo { samples: usize, seed: u64 },
}

impl DiscretizeMethod {
    /// Analytic when the model supports it, Monte Carlo otherwise.
    pub fn auto(model: &NoiseModel, samples: usize, seed: u64) -> Self {
        if supports_analytic(model) {
            DiscretizeMethod::Analytic
        } else {
            DiscretizeMethod::MonteCarlo { samples, seed }
        }
    }
}

fn supports_analytic(model: &NoiseModel) -> bool {
    model.is_product_form()
        || matches!(model, NoiseModel::GridDensity(_))
        || (matches!(model, NoiseModel::Gaussian(_)) && model.dim() == 2)
}

/// Discrete approximation `q_Σ(i) = ∫_{A_i} q`.
pub fn discretize(
    model: &NoiseModel,
    partition: &GridPartition,
    method: DiscretizeMethod,
) -> Result<DiscreteDist> {
    check_dim(partition.dim(), model.dim())?;
    match method {
        DiscretizeMethod::Analytic => discretize_analytic(model, partition),
        DiscretizeMethod::MonteCarlo { samples, seed } => {
            if samples == 0 {
                return Err(Error::Config("Monte-Carlo discretization needs samples > 0".into()));
            }
            let mut stream = rng::substream(seed, &[rng::tag::DISCRETIZE]);
            let mut counts = vec![0u64; partition.len()];
            let mut buf = vec![0.0; model.dim()];
            for _ in 0..samples {
                model.sample_into(&mut stream, &mut buf);
                counts[partition.label_unchecked(&buf)] += 1;
            }
            frequencies(counts, samples as f64, partition)
        }
    }
}

fn discretize_analytic(model: &NoiseModel, partition: &GridPartition) -> Result<DiscreteDist> {
    let d = partition.dim();
    let mut weights = vec![0.0; partition.len()];
    if let NoiseModel::GridDensity(g) = model {
        for (i, w) in weights.iter_mut().enumerate().take(partition.bounded_cells()) {
            let (lo, hi) = partition.cell_bounds(i).expect("bounded cell");
            *w = g.rectangle_mass(&lo, &hi);
        }
    } else if !model.is_product_form() {
        if !supports_analytic(model) {
            return Err(Error::Unsupported(
                "analytic discretization needs a product-form model or a 2-D gaussian".into(),
            ));
        }
        bivariate_cell_masses(model, partition, &mut weights);
    } else {
        let axis_masses: Vec<Vec<f64>> = (0..d)
            .map(|j| {
                let edges = partition.axis_edges(j);
                edges
                    .windows(2)
                    .map(|e| model.axis_interval_mass(j, e[0], e[1]))
                    .collect()
            })
            .collect();
        for (i, w) in weights.iter_mut().enumerate().take(partition.bounded_cells()) {
            let m = partition.multi_index(i);
            *w = m.iter().enumerate().map(|(j, &s)| axis_masses[j][s]).product();
        }
    }
    let inside: f64 = weights.iter().sum();
    weights[partition.overflow_index()] = (1.0 - inside).max(0.0);
    normalize_rounding(&mut weights);
    DiscreteDist::on_partition(weights, partition)
}

/// Cell masses of a correlated 2-D Gaussian: `∫ φ₁(x) P(X₂ ∈ [a, b] | X₁ = x) dx`
/// over each first-axis strip, by Gauss–Legendre panels narrow enough to
/// resolve the conditional step.
fn bivariate_cell_masses(model: &NoiseModel, partition: &GridPartition, weights: &mut [f64]) {
    let mean = model.mean();
    let cov = model.covariance();
    let s1 = cov[(0, 0)].sqrt();
    let beta = cov[(0, 1)] / cov[(0, 0)];
    let s_cond = (cov[(1, 1)] - beta * cov[(0, 1)]).max(0.0).sqrt();
    let e1 = partition.axis_edges(0);
    let e2 = partition.axis_edges(1);
    let n2 = e2.len() - 1;
    let (nodes, gl_weights) = gauss_legendre(10);
    let mut cdf = vec![0.0; e2.len()];
    for (i, strip) in e1.windows(2).enumerate() {
        let width = strip[1] - strip[0];
        let steep = if s_cond > 0.0 { width * beta.abs() / s_cond } else { 64.0 };
        let panels = steep.ceil().clamp(1.0, 64.0) as usize;
        let h = width / panels as f64;
        for p in 0..panels {
            let (a, b) = (strip[0] + p as f64 * h, strip[0] + (p + 1) as f64 * h);
            for (t, gw) in nodes.iter().zip(&gl_weights) {
                let x = 0.5 * (a + b) + 0.5 * (b - a) * t;
                let dens = crate::special::normal_pdf((x - mean[0]) / s1) / s1 * 0.5 * (b - a) * gw;
                let m = mean[1] + beta * (x - mean[0]);
                for (c, e) in cdf.iter_mut().zip(&e2) {
                    *c = if s_cond > 0.0 {
                        crate::special::normal_cdf((e - m) / s_cond)
                    } else if *e >= m {
                        1.0
                    } else {
                        0.0
                    };
                }
                for j in 0..n2 {
                    weights[partition.flat_index(&[i, j])] += dens * (cdf[j + 1] - cdf[j]).max(0.0);
                }
            }
        }
    }
}

/// Gauss–Legendre nodes and weights on `[−1, 1]`.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

// Products of per-axis masses can sum to 1 + O(1e-15); fold that into the largest cell.
fn normalize_rounding(weights: &mut [f64]) {
    let total: f64 = weights.iter().sum();
    if total > 1.0 {
        let scale = 1.0 / total;
        weights.iter_mut().for_each(|w| *w *= scale);
    }
}

fn frequencies(counts: Vec<u64>, n: f64, partition: &GridPartition) -> Result<DiscreteDist> {
    let weights = counts.into_iter().map(|c| c as f64 / n).collect();
    DiscreteDist::on_partition(weights, partition)
}

/// Empirical type: the cell-frequency vector of `samples`.
pub fn empirical_type<P: AsRef<[f64]>>(
    partition: &GridPartition,
    samples: &[P],
) -> Result<DiscreteDist> {
    if samples.is_empty() {
        return Err(Error::Contract("empirical type of an empty sample".into()));
    }
    let mut counts = vec![0u64; partition.len()];
    for s in samples {
        counts[partition.label(s.as_ref())?] += 1;
    }
    frequencies(counts, samples.len() as f64, partition)
}

/// Draws a uniformly distributed point inside a bounded cell.
pub(crate) fn sample_in_cell<R: Rng + ?Sized>(
    partition: &GridPartition,
    index: usize,
    rng: &mut R,
    out: &mut [f64],
) {
    let m = partition.multi_index(index);
    for (j, o) in out.iter_mut().enumerate() {
        let lo = partition.origin[j] + m[j] as f64 * partition.cell_width[j];
        *o = lo + rng.random::<f64>() * partition.cell_width[j];
    }
}
