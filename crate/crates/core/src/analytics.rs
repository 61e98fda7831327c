//! Closed-form and quadrature risk quantities.
//!
//! Under cross-check-and-corrupt with the other agents at `n*`, an agent
//! that collects `n` points and uses the weighted estimator has maximum risk
//!
//! ```text
//! R(n) = E_x[ 1 / ( a/(sigma^2 + b x^2) + C ) ],   x ~ N(0, 1),
//! a = (m-2) n*,  b = alpha^2 sigma^2 (1/n + 1/n*),  C = (n + n*)/sigma^2,
//! ```
//!
//! per coordinate. Writing the integrand as `(1/C)(1 - (a/(C b)) / (L + x^2))`
//! with `L = (a + C sigma^2)/(C b)` reduces it to `I(L) = E[1/(L + x^2)]`.
//! The penalty is `d R(n) + c n`. `n` is real-valued throughout this module.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alpha::scaled_erfc;
use crate::error::{Error, Result};
use crate::mechanisms::k_epsilon;
use crate::params::ProblemParams;
use crate::quadrature::{expect_std_normal, DEFAULT_ABS_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselinePenalties {
    /// Best standalone penalty `2 sigma sqrt(c d)`.
    pub p_min_ir: f64,
    /// Minimum social penalty `2 sigma sqrt(c m d)`.
    pub global_min_social: f64,
    /// Social penalty at the pooling equilibrium, `sigma sqrt(c d) (m + 1)`.
    pub pool_ne_social: f64,
    /// Penalty of a free rider under pooling when the others collect
    /// `sigma sqrt(d/(c m))` each.
    pub free_rider_penalty: f64,
}

pub fn baseline_penalties(p: &ProblemParams) -> BaselinePenalties {
    let s = p.sigma() * (p.cost() * p.dim() as f64).sqrt();
    let m = p.agents() as f64;
    BaselinePenalties {
        p_min_ir: 2.0 * s,
        global_min_social: 2.0 * s * m.sqrt(),
        pool_ne_social: s * (m + 1.0),
        free_rider_penalty: s * m.sqrt() / (m - 1.0),
    }
}

/// `E[1/(L + x^2)]` for `x ~ N(0, 1)`: `sqrt(pi/(2L)) erfcx(sqrt(L/2))`.
pub fn gauss_int_i(l: f64) -> Result<f64> {
    if !(l > 0.0) {
        return Err(Error::NonpositiveL(l));
    }
    Ok((PI / (2.0 * l)).sqrt() * scaled_erfc((l / 2.0).sqrt()))
}

/// `E[1/(L + x^2)^2]`: `sqrt(pi/(2L)) (1/(2L) - 1/2) erfcx(sqrt(L/2)) + 1/(2L)`.
pub fn gauss_int_j(l: f64) -> Result<f64> {
    if !(l > 0.0) {
        return Err(Error::NonpositiveL(l));
    }
    let coeff = 1.0 / (2.0 * l) - 0.5;
    Ok((PI / (2.0 * l)).sqrt() * coeff * scaled_erfc((l / 2.0).sqrt()) + 1.0 / (2.0 * l))
}

fn check_regime(p: &ProblemParams) -> Result<()> {
    if !p.uses_corruption() {
        return Err(Error::NoCorruptionRegime(p.agents()));
    }
    Ok(())
}

fn check_n(n: f64) -> Result<()> {
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::InvalidParam(format!("sample count must be positive, got {n}")));
    }
    Ok(())
}

struct RiskTerms {
    a: f64,
    b: f64,
    c: f64,
}

fn risk_terms(n: f64, p: &ProblemParams, alpha: f64) -> RiskTerms {
    let s2 = p.sigma() * p.sigma();
    let ns = p.n_star_f64();
    RiskTerms {
        a: (p.agents() as f64 - 2.0) * ns,
        b: alpha * alpha * s2 * (1.0 / n + 1.0 / ns),
        c: (n + ns) / s2,
    }
}

/// Maximum risk over all coordinates, `d R(n)`, from the `I` closed form.
pub fn rinf_max_risk(n: f64, p: &ProblemParams, alpha: f64) -> Result<f64> {
    check_regime(p)?;
    check_n(n)?;
    let s2 = p.sigma() * p.sigma();
    let t = risk_terms(n, p, alpha);
    let per_dim = if t.b == 0.0 {
        1.0 / (t.a / s2 + t.c)
    } else {
        let l = (t.a + t.c * s2) / (t.c * t.b);
        (1.0 - t.a / (t.c * t.b) * gauss_int_i(l)?) / t.c
    };
    Ok(p.dim() as f64 * per_dim)
}

/// `p(n) = d R(n) + c n` with the expectation evaluated by quadrature.
pub fn penalty_closed_form(n: f64, p: &ProblemParams, alpha: f64) -> Result<f64> {
    check_regime(p)?;
    check_n(n)?;
    let s2 = p.sigma() * p.sigma();
    let t = risk_terms(n, p, alpha);
    let risk = expect_std_normal(|x| 1.0 / (t.a / (s2 + t.b * x * x) + t.c), DEFAULT_ABS_TOL)?;
    Ok(p.dim() as f64 * risk + p.cost() * n)
}

/// `p(n*)` in closed form.
pub fn penalty_at_nstar(p: &ProblemParams, alpha: f64) -> Result<f64> {
    check_regime(p)?;
    let m = p.agents() as f64;
    let ns = p.n_star_f64();
    let s2 = p.sigma() * p.sigma();
    let sr = alpha / (m * ns).sqrt();
    let two_pi = (2.0 * PI).sqrt();
    let risk = sr * s2 * (2.0 * m * two_pi * sr - scaled_erfc(1.0 / (2.0 * 2f64.sqrt() * sr)) * (m - 2.0) * PI)
        / (4.0 * two_pi * alpha * alpha);
    Ok(p.dim() as f64 * risk + p.cost() * ns)
}

/// `p(n*)` through `A = alpha/sqrt(n*)`:
/// `sigma sqrt(c d/m) ((10A^2 - 1)/(4A^2(m+1)/m - 1) + 1)`.
pub fn penalty_at_nstar_simplified(p: &ProblemParams, alpha: f64) -> Result<f64> {
    check_regime(p)?;
    let m = p.agents() as f64;
    let a2 = alpha * alpha / p.n_star_f64();
    let scale = p.sigma() * (p.cost() * p.dim() as f64 / m).sqrt();
    Ok(scale * ((10.0 * a2 - 1.0) / (4.0 * a2 * (m + 1.0) / m - 1.0) + 1.0))
}

/// `p'(n*)` in closed form; zero exactly when `alpha` solves `G = 0`.
pub fn penalty_derivative_at_nstar(p: &ProblemParams, alpha: f64) -> Result<f64> {
    check_regime(p)?;
    let m = p.agents() as f64;
    let ns = p.n_star_f64();
    let s2 = p.sigma() * p.sigma();
    let mn = m * ns;
    let a2 = alpha * alpha;
    let z = mn.sqrt() / (2.0 * 2f64.sqrt() * alpha);
    let bracket = 4.0 * alpha / mn.sqrt() * (4.0 * a2 * m / ((m - 2.0) * ns) - 1.0)
        - scaled_erfc(z) * (4.0 * a2 * (m + 1.0) / mn - 1.0) * (2.0 * PI).sqrt();
    let risk_slope = -s2 / (64.0 * (a2 / (m - 2.0)) * (alpha / mn.sqrt()) * mn) * bracket;
    Ok(p.dim() as f64 * risk_slope + p.cost())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyProfile {
    pub n_grid: Vec<u64>,
    pub p_values: Vec<f64>,
    pub risk_values: Vec<f64>,
    pub derivative_at_nstar: f64,
}

impl PenaltyProfile {
    /// Grid point with the smallest penalty.
    pub fn argmin(&self) -> u64 {
        let (i, _) = self
            .p_values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("nonempty grid");
        self.n_grid[i]
    }

    /// Largest violation of the midpoint convexity inequality over all
    /// triples `(a, (a+b)/2, b)` with an integer midpoint on the grid.
    pub fn max_midpoint_violation(&self) -> f64 {
        let idx = |n: u64| self.n_grid.binary_search(&n).ok();
        let mut worst = f64::NEG_INFINITY;
        for (i, &a) in self.n_grid.iter().enumerate() {
            for (j, &b) in self.n_grid.iter().enumerate().skip(i + 2) {
                if (a + b) % 2 != 0 {
                    continue;
                }
                if let Some(k) = idx((a + b) / 2) {
                    let v = self.p_values[k] - 0.5 * (self.p_values[i] + self.p_values[j]);
                    worst = worst.max(v);
                }
            }
        }
        worst
    }
}

/// Penalty by quadrature on an integer grid, evaluated in parallel.
pub fn penalty_profile(p: &ProblemParams, alpha: f64, n_grid: &[u64]) -> Result<PenaltyProfile> {
    let mut grid = n_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    let p_values: Vec<f64> = grid
        .par_iter()
        .map(|&n| penalty_closed_form(n as f64, p, alpha))
        .collect::<Result<_>>()?;
    let risk_values = grid.iter().zip(&p_values).map(|(&n, v)| v - p.cost() * n as f64).collect();
    Ok(PenaltyProfile {
        n_grid: grid,
        p_values,
        risk_values,
        derivative_at_nstar: penalty_derivative_at_nstar(p, alpha)?,
    })
}

/// Social penalty at the recommended profile over the minimum social penalty:
/// `(1/2)((10A^2 - 1)/(4A^2(m+1)/m - 1) + 1)`.
pub fn pos_mechany(p: &ProblemParams, alpha: f64) -> Result<f64> {
    check_regime(p)?;
    let m = p.agents() as f64;
    let a2 = alpha * alpha / p.n_star_f64();
    Ok(0.5 * ((10.0 * a2 - 1.0) / (4.0 * a2 * (m + 1.0) / m - 1.0) + 1.0))
}

/// `1 + 1/(2 k_eps)`.
pub fn pos_mechpk(epsilon: f64) -> Result<f64> {
    Ok(1.0 + 0.5 / k_epsilon(epsilon)? as f64)
}

/// `(m + 1)/(2 sqrt(m))`, the small-market ratio.
pub fn pos_smallm(p: &ProblemParams) -> Result<f64> {
    if p.uses_corruption() {
        return Err(Error::InvalidParam(format!("m = {} is not a small market", p.agents())));
    }
    let m = p.agents() as f64;
    Ok((m + 1.0) / (2.0 * m.sqrt()))
}

/// Penalty when `m <= 4` agents pool `sigma sqrt(d)/(m sqrt(c))` points each:
/// `(1 + 1/m) sigma sqrt(c d)`.
pub fn small_market_penalty(p: &ProblemParams) -> Result<f64> {
    if p.uses_corruption() {
        return Err(Error::InvalidParam(format!("m = {} is not a small market", p.agents())));
    }
    let m = p.agents() as f64;
    Ok((1.0 + 1.0 / m) * p.sigma() * (p.cost() * p.dim() as f64).sqrt())
}

/// Bayes risk under an `N(0, ell^2)` prior of the posterior mean, for an
/// agent with `n` points receiving `n*` clean and `(m-2) n*` corrupted points.
pub fn bayes_risk_rl(ell: f64, n: f64, p: &ProblemParams, alpha: f64) -> Result<f64> {
    check_regime(p)?;
    check_n(n)?;
    if !(ell > 0.0) {
        return Err(Error::InvalidParam(format!("ell must be positive, got {ell}")));
    }
    let s2 = p.sigma() * p.sigma();
    let ns = p.n_star_f64();
    let prior = 1.0 / (ell * ell);
    let sigma_tilde_sq = s2 / ns + 1.0 / (n / s2 + prior);
    let corrupt = (p.agents() as f64 - 2.0) * ns;
    let trusted = (n + ns) / s2 + prior;
    let risk = expect_std_normal(
        |e| 1.0 / (corrupt / (s2 + alpha * alpha * sigma_tilde_sq * e * e) + trusted),
        DEFAULT_ABS_TOL,
    )?;
    Ok(p.dim() as f64 * risk)
}

/// `E[min((X - a)^2, cap)]` for `X ~ N(0, 1)`, by quadrature.
pub fn truncated_square_expectation(shift: f64, cap: f64) -> Result<f64> {
    expect_std_normal(|x| ((x - shift) * (x - shift)).min(cap), DEFAULT_ABS_TOL)
}

/// Upper bound on the high-dimensional penalty at the recommended profile:
/// `sigma sqrt(c d/m) (m/(2 + (m-2)/(1 + 2A^2)) + 1)`.
pub fn highdim_penalty_bound(p: &ProblemParams, alpha: f64) -> Result<f64> {
    check_regime(p)?;
    let m = p.agents() as f64;
    let a2 = alpha * alpha / p.n_star_f64();
    let scale = p.sigma() * (p.cost() * p.dim() as f64 / m).sqrt();
    Ok(scale * (m / (2.0 + (m - 2.0) / (1.0 + 2.0 * a2)) + 1.0))
}

/// Ratio excess `E(m) = 4A^2((A^2-1)m + 1 - 4A^2) m / ((4A^2 + m)((7A^2-1)m + 2A^2))`.
pub fn e_of_m(m: usize, a_m: f64) -> f64 {
    let m = m as f64;
    let a2 = a_m * a_m;
    4.0 * a2 * ((a2 - 1.0) * m + 1.0 - 4.0 * a2) * m / ((4.0 * a2 + m) * ((7.0 * a2 - 1.0) * m + 2.0 * a2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExploitRisk {
    pub deployed_risk: f64,
    pub exploit_risk: f64,
}

/// Risks under corrupt-and-deploy at the recommended profile: the deployed
/// mean's `(1 + 1/k) sigma^2/(m n*)` and that of the weighted estimator with
/// fixed `tau^2 = sigma^2 m/(k (m-1))` applied to own and corrupted data.
pub fn mechpk_exploit_risk(p: &ProblemParams, epsilon: f64) -> Result<ExploitRisk> {
    let k = k_epsilon(epsilon)? as f64;
    let m = p.agents() as f64;
    let ns = p.pooled_sample_size()? as f64;
    let s2 = p.sigma() * p.sigma() * p.dim() as f64;
    let q = m / (k * (m - 1.0));
    Ok(ExploitRisk {
        deployed_risk: (1.0 + 1.0 / k) * s2 / (m * ns),
        exploit_risk: (1.0 + q) / (m + q) * s2 / ns,
    })
}

/// Corruption variance making the exploit estimator optimal at equilibrium.
pub fn mechpk_exploit_tau_sq(p: &ProblemParams, epsilon: f64) -> Result<f64> {
    let k = k_epsilon(epsilon)? as f64;
    let m = p.agents() as f64;
    Ok(p.sigma() * p.sigma() * m / (k * (m - 1.0)))
}

/// Expected penalty at the corrupt-and-deploy recommended profile,
/// `(2 + 1/k) sigma sqrt(c d/m)`.
pub fn corrupt_deploy_penalty(p: &ProblemParams, epsilon: f64) -> Result<f64> {
    let k = k_epsilon(epsilon)? as f64;
    Ok((2.0 + 1.0 / k) * p.sigma() * (p.cost() * p.dim() as f64 / p.agents() as f64).sqrt())
}

/// Penalty under the size check when the others submit the pooled size and
/// the agent collects `n`: `d sigma^2/(n + (m-1) n*) + c n` above the
/// threshold, `d sigma^2/n + c n` below it.
pub fn size_check_penalty(n: f64, p: &ProblemParams) -> Result<f64> {
    let ns = p.pooled_sample_size()? as f64;
    let s2 = p.sigma() * p.sigma() * p.dim() as f64;
    let m = p.agents() as f64;
    let risk = if n >= ns {
        s2 / (n + (m - 1.0) * ns)
    } else if n > 0.0 {
        s2 / n
    } else {
        f64::INFINITY
    };
    Ok(risk + p.cost() * n)
}
