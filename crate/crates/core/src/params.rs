//! Market parameters, datasets and the small statistical kernels shared by
//! the other modules.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest distance from an integer tolerated for the recommended sample size.
pub const INTEGRALITY_TOL: f64 = 1e-9;

/// Public market parameters: per-dimension noise `sigma`, per-sample cost,
/// number of agents `m` and dimension `d`, together with the recommended
/// per-agent sample count `n*` derived from them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemParams {
    sigma: f64,
    cost: f64,
    agents: usize,
    dim: usize,
    n_star: u64,
}

impl ProblemParams {
    pub fn new(sigma: f64, cost: f64, agents: usize, dim: usize) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidParam(format!("sigma must be positive, got {sigma}")));
        }
        if !(cost.is_finite() && cost > 0.0) {
            return Err(Error::InvalidParam(format!("cost must be positive, got {cost}")));
        }
        if agents < 2 {
            return Err(Error::InvalidParam(format!("need at least 2 agents, got {agents}")));
        }
        if dim < 1 {
            return Err(Error::InvalidParam("dimension must be at least 1".into()));
        }
        let n_star = integral(recommended_size_raw(sigma, cost, agents, dim))?;
        Ok(Self { sigma, cost, agents, dim, n_star })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn cost(&self) -> f64 {
        self.cost
    }

    pub fn agents(&self) -> usize {
        self.agents
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Recommended sample count under cross-check-and-corrupt:
    /// `sigma sqrt(d/(c m))` for `m >= 5`, `(sigma/m) sqrt(d/c)` for `m <= 4`.
    pub fn n_star(&self) -> u64 {
        self.n_star
    }

    pub fn n_star_f64(&self) -> f64 {
        self.n_star as f64
    }

    /// Whether cross-check-and-corrupt actually corrupts (`m >= 5`).
    pub fn uses_corruption(&self) -> bool {
        self.agents >= 5
    }

    /// Cost per sample per dimension; the d-dimensional Gaussian problem is
    /// `d` independent copies of the scalar one at this cost.
    pub fn effective_cost(&self) -> f64 {
        self.cost / self.dim as f64
    }

    /// Per-agent sample count `sigma sqrt(d/(c m))` used by pooling, the
    /// size check and corrupt-and-deploy, regardless of `m`.
    pub fn pooled_sample_size(&self) -> Result<u64> {
        integral(self.sigma * (self.dim as f64 / (self.cost * self.agents as f64)).sqrt())
    }
}

fn recommended_size_raw(sigma: f64, cost: f64, agents: usize, dim: usize) -> f64 {
    let m = agents as f64;
    let d = dim as f64;
    if agents >= 5 {
        sigma * d.sqrt() / (cost * m).sqrt()
    } else {
        sigma * d.sqrt() / (m * cost.sqrt())
    }
}

fn integral(value: f64) -> Result<u64> {
    let nearest = value.round();
    let deviation = (value - nearest).abs();
    if !(deviation <= INTEGRALITY_TOL) {
        return Err(Error::NonIntegerNStar { value, deviation });
    }
    if nearest < 1.0 {
        return Err(Error::InvalidParam(format!(
            "recommended sample size {value} rounds to zero"
        )));
    }
    Ok(nearest as u64)
}

/// Re-derives `n*` from the raw fields. Idempotent on valid input.
pub fn validate_params(p: &ProblemParams) -> Result<ProblemParams> {
    ProblemParams::new(p.sigma, p.cost, p.agents, p.dim)
}

/// Ordered collection of `d`-dimensional points, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    dim: usize,
    values: Vec<f64>,
}

impl Dataset {
    pub fn empty(dim: usize) -> Self {
        assert!(dim >= 1, "dataset dimension must be positive");
        Self { dim, values: Vec::new() }
    }

    pub fn with_capacity(dim: usize, points: usize) -> Self {
        assert!(dim >= 1, "dataset dimension must be positive");
        Self { dim, values: Vec::with_capacity(dim * points) }
    }

    /// One-dimensional dataset from scalars.
    pub fn from_scalars(xs: &[f64]) -> Self {
        Self { dim: 1, values: xs.to_vec() }
    }

    pub fn from_points(dim: usize, points: &[Vec<f64>]) -> Result<Self> {
        let mut out = Self::with_capacity(dim, points.len());
        for p in points {
            out.push(p)?;
        }
        Ok(out)
    }

    pub fn from_flat(dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || values.len() % dim != 0 {
            return Err(Error::DimensionMismatch { expected: dim, found: values.len() });
        }
        Ok(Self { dim, values })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.dim)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn push(&mut self, point: &[f64]) -> Result<()> {
        if point.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: point.len() });
        }
        self.values.extend_from_slice(point);
        Ok(())
    }

    pub fn extend(&mut self, other: &Dataset) -> Result<()> {
        if other.dim != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: other.dim });
        }
        self.values.extend_from_slice(&other.values);
        Ok(())
    }

    /// First `k` points.
    pub fn prefix(&self, k: usize) -> Dataset {
        let k = k.min(self.len());
        Self { dim: self.dim, values: self.values[..k * self.dim].to_vec() }
    }

    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Dataset {
        Self { dim: self.dim, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    /// Per-coordinate sums.
    pub fn sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.dim];
        for p in self.points() {
            for (acc, v) in s.iter_mut().zip(p) {
                *acc += v;
            }
        }
        s
    }

    /// Per-coordinate sample mean, `None` when empty.
    pub fn mean(&self) -> Option<Vec<f64>> {
        if self.is_empty() {
            return None;
        }
        let n = self.len() as f64;
        Some(self.sums().into_iter().map(|s| s / n).collect())
    }

    /// Per-coordinate unbiased sample variance, `None` with fewer than two points.
    pub fn variance(&self) -> Option<Vec<f64>> {
        if self.len() < 2 {
            return None;
        }
        let mean = self.mean()?;
        let mut ss = vec![0.0; self.dim];
        for p in self.points() {
            for ((acc, v), mu) in ss.iter_mut().zip(p).zip(&mean) {
                *acc += (v - mu) * (v - mu);
            }
        }
        let denom = (self.len() - 1) as f64;
        Some(ss.into_iter().map(|s| s / denom).collect())
    }

    /// Concatenation of several datasets of the same dimension.
    pub fn concat<'a>(dim: usize, parts: impl IntoIterator<Item = &'a Dataset>) -> Result<Dataset> {
        let mut out = Dataset::empty(dim);
        for p in parts {
            out.extend(p)?;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Family {
    Gaussian { std_dev: f64 },
    /// Independent `U(mu_k - w, mu_k + w)` coordinates.
    UniformBox { half_width: f64 },
    /// Independent `mu_k +/- scale` coordinates with equal probability.
    ScaledRademacher { scale: f64 },
}

/// A data-generating distribution with a per-dimension mean vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSpec {
    family: Family,
    mean: Vec<f64>,
}

impl DistributionSpec {
    pub fn gaussian(mean: Vec<f64>, std_dev: f64) -> Result<Self> {
        if !(std_dev.is_finite() && std_dev >= 0.0) {
            return Err(Error::InvalidDistribution(format!("std_dev {std_dev}")));
        }
        Self::checked(Family::Gaussian { std_dev }, mean)
    }

    /// Uniform box whose per-dimension variance `w^2/3` must not exceed `sigma_bound^2`.
    pub fn uniform_box(mean: Vec<f64>, half_width: f64, sigma_bound: f64) -> Result<Self> {
        if !(half_width.is_finite() && half_width >= 0.0) {
            return Err(Error::InvalidDistribution(format!("half width {half_width}")));
        }
        let spec = Self::checked(Family::UniformBox { half_width }, mean)?;
        spec.within_variance_bound(sigma_bound)
    }

    pub fn scaled_rademacher(mean: Vec<f64>, scale: f64, sigma_bound: f64) -> Result<Self> {
        if !(scale.is_finite() && scale >= 0.0) {
            return Err(Error::InvalidDistribution(format!("scale {scale}")));
        }
        let spec = Self::checked(Family::ScaledRademacher { scale }, mean)?;
        spec.within_variance_bound(sigma_bound)
    }

    fn checked(family: Family, mean: Vec<f64>) -> Result<Self> {
        if mean.is_empty() || mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidDistribution("mean must be a finite non-empty vector".into()));
        }
        Ok(Self { family, mean })
    }

    fn within_variance_bound(self, sigma_bound: f64) -> Result<Self> {
        let var = self.per_dim_variance();
        // one ulp of slack so w = sqrt(3) sigma is accepted
        if var > sigma_bound * sigma_bound * (1.0 + 4.0 * f64::EPSILON) {
            return Err(Error::InvalidDistribution(format!(
                "per-dimension variance {var} exceeds sigma^2 = {}",
                sigma_bound * sigma_bound
            )));
        }
        Ok(self)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn per_dim_variance(&self) -> f64 {
        match self.family {
            Family::Gaussian { std_dev } => std_dev * std_dev,
            Family::UniformBox { half_width } => half_width * half_width / 3.0,
            Family::ScaledRademacher { scale } => scale * scale,
        }
    }

    /// Same family, different mean.
    pub fn with_mean(&self, mean: Vec<f64>) -> Result<Self> {
        if mean.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: mean.len() });
        }
        Self::checked(self.family, mean)
    }

    pub fn draw_point<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<f64>) {
        for &mu in &self.mean {
            let v = match self.family {
                Family::Gaussian { std_dev } => {
                    let z: f64 = StandardNormal.sample(rng);
                    mu + std_dev * z
                }
                Family::UniformBox { half_width } => {
                    let u: f64 = rng.random::<f64>() * 2.0 - 1.0;
                    mu + half_width * u
                }
                Family::ScaledRademacher { scale } => {
                    if rng.random::<bool>() {
                        mu + scale
                    } else {
                        mu - scale
                    }
                }
            };
            out.push(v);
        }
    }
}

/// `n` i.i.d. draws from `spec`.
pub fn sample_dataset<R: Rng + ?Sized>(spec: &DistributionSpec, n: usize, rng: &mut R) -> Dataset {
    let mut values = Vec::with_capacity(n * spec.dim());
    for _ in 0..n {
        spec.draw_point(rng, &mut values);
    }
    Dataset { dim: spec.dim(), values }
}

/// `k (k-2) ... 1` for odd `k`; `(-1)!! = 1`.
pub fn double_factorial(k: i64) -> Result<u128> {
    if k == -1 {
        return Ok(1);
    }
    if k < 0 || k % 2 == 0 {
        return Err(Error::EvenInput(k));
    }
    let mut acc: u128 = 1;
    let mut j = k as u128;
    while j > 1 {
        acc = acc.checked_mul(j).ok_or(Error::Overflow("double_factorial"))?;
        j -= 2;
    }
    Ok(acc)
}

/// `E[(X - mu)^p]` for `X ~ N(mu, sigma^2)`.
pub fn normal_central_moment(p: u32, sigma: f64) -> f64 {
    if p % 2 == 1 {
        return 0.0;
    }
    let df = double_factorial(p as i64 - 1).expect("odd argument") as f64;
    sigma.powi(p as i32) * df
}
