//! The four data-sharing mechanisms.
//!
//! * [`mech_pool`]: everyone receives everyone else's submissions.
//! * [`mech_size_check`]: as pooling, but only for agents whose submission
//!   has at least `sigma sqrt(d/(c m))` points.
//! * [`mech_corrupt_deploy`]: deploys a mean computed on the agent's own
//!   submission and the others' data corrupted by a power of the mean gap.
//! * [`mech_cross_check_corrupt`]: returns a clean cross-check sample and the
//!   rest of the others' data corrupted with variance `alpha^2` times the
//!   squared gap between the submission mean and the cross-check mean.

use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{Dataset, ProblemParams};
use crate::rng::{domain, SeedTree};

/// What an agent receives: clean data `D_i`, corrupted data `D'_i` and the
/// per-dimension corruption variance. An infinite `eta_sq` marks a withheld
/// corrupted set (the agent submitted nothing to cross-check against).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub clean: Dataset,
    pub corrupted: Dataset,
    pub eta_sq: Vec<f64>,
}

impl Allocation {
    pub fn uncorrupted(data: Dataset) -> Self {
        let d = data.dim();
        Self { clean: data, corrupted: Dataset::empty(d), eta_sq: vec![0.0; d] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeployedEstimate {
    pub value: Vec<f64>,
}

fn check_submissions(subs: &[Dataset]) -> Result<usize> {
    if subs.len() < 2 {
        return Err(Error::InvalidParam(format!("need at least 2 submissions, got {}", subs.len())));
    }
    let d = subs[0].dim();
    for s in subs {
        if s.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, found: s.dim() });
        }
    }
    Ok(d)
}

/// Union of all submissions except agent `i`'s, in agent order.
pub fn others_union(subs: &[Dataset], i: usize) -> Result<Dataset> {
    let d = check_submissions(subs)?;
    Dataset::concat(d, subs.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, s)| s))
}

pub fn mech_pool(subs: &[Dataset]) -> Result<Vec<Dataset>> {
    (0..subs.len()).map(|i| others_union(subs, i)).collect()
}

pub fn size_check_for_agent(i: usize, subs: &[Dataset], p: &ProblemParams) -> Result<Dataset> {
    let threshold = p.pooled_sample_size()? as usize;
    if subs[i].len() >= threshold {
        others_union(subs, i)
    } else {
        Ok(Dataset::empty(check_submissions(subs)?))
    }
}

pub fn mech_size_check(subs: &[Dataset], p: &ProblemParams) -> Result<Vec<Dataset>> {
    (0..subs.len()).map(|i| size_check_for_agent(i, subs, p)).collect()
}

/// `ceil(1/(2 epsilon))`.
pub fn k_epsilon(epsilon: f64) -> Result<u32> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidParam(format!("epsilon must be positive, got {epsilon}")));
    }
    let k = (1.0 / (2.0 * epsilon)).ceil();
    if k > MAX_K as f64 {
        return Err(Error::InvalidParam(format!("epsilon {epsilon} gives an exponent above {MAX_K}")));
    }
    Ok(k as u32)
}

pub const MAX_K: u32 = 100_000;

/// `ln beta^2` of corrupt-and-deploy for a total submitted size `total`:
/// `beta^2 = N^2 (m-1)^{k-1} / (k (2k-1)!! sigma^k c^{(k-2)/2} m^{3k/2})`.
/// In `d` dimensions each coordinate uses the per-dimension cost `c/d`.
/// Evaluated in logs since `(2k-1)!!` overflows quickly.
pub fn corrupt_deploy_ln_beta_sq(total: usize, p: &ProblemParams, k: u32) -> Result<f64> {
    if total == 0 {
        return Err(Error::EmptyInput);
    }
    let m = p.agents() as f64;
    let kf = k as f64;
    let ln_df: f64 = (1..=k).map(|j| (2.0 * j as f64 - 1.0).ln()).sum();
    Ok(2.0 * (total as f64).ln() + (kf - 1.0) * (m - 1.0).ln()
        - kf.ln()
        - ln_df
        - kf * p.sigma().ln()
        - (kf - 2.0) / 2.0 * p.effective_cost().ln()
        - 1.5 * kf * m.ln())
}

pub fn corrupt_deploy_beta_sq(total: usize, p: &ProblemParams, k: u32) -> Result<f64> {
    let v = corrupt_deploy_ln_beta_sq(total, p, k)?.exp();
    if !v.is_finite() {
        return Err(Error::Overflow("corrupt_deploy_beta_sq"));
    }
    Ok(v)
}

/// `beta^2 gap^{2k}`, computed without forming `beta^2` or `gap^{2k}` alone.
fn power_corruption(ln_beta_sq: f64, gap: f64, k: u32) -> f64 {
    if gap == 0.0 {
        return 0.0;
    }
    (ln_beta_sq + 2.0 * k as f64 * gap.abs().ln()).exp()
}

/// Agent `i`'s round of corrupt-and-deploy: the deployed estimate together
/// with the corrupted data it was computed from (clean part empty).
pub fn corrupt_deploy_for_agent<R: Rng + ?Sized>(
    i: usize,
    subs: &[Dataset],
    p: &ProblemParams,
    epsilon: f64,
    rng: &mut R,
) -> Result<(DeployedEstimate, Allocation)> {
    let d = check_submissions(subs)?;
    if let Some(j) = subs.iter().position(|s| s.is_empty()) {
        return Err(Error::EmptySubmission(j));
    }
    let k = k_epsilon(epsilon)?;
    let total: usize = subs.iter().map(Dataset::len).sum();
    let ln_beta_sq = corrupt_deploy_ln_beta_sq(total, p, k)?;
    let others = others_union(subs, i)?;
    let own_mean = subs[i].mean().expect("nonempty");
    let others_mean = others.mean().expect("nonempty");
    let eta_sq: Vec<f64> = own_mean
        .iter()
        .zip(&others_mean)
        .map(|(a, b)| power_corruption(ln_beta_sq, a - b, k))
        .collect();
    if eta_sq.iter().any(|v| !v.is_finite()) {
        return Err(Error::Overflow("corrupt-and-deploy variance"));
    }
    let corrupted = add_noise(&others, &eta_sq, rng, None);
    let mut pooled = subs[i].clone();
    pooled.extend(&corrupted)?;
    let value = pooled.mean().expect("nonempty");
    debug_assert_eq!(value.len(), d);
    Ok((DeployedEstimate { value }, Allocation { clean: Dataset::empty(d), corrupted, eta_sq }))
}

pub fn mech_corrupt_deploy(
    subs: &[Dataset],
    p: &ProblemParams,
    epsilon: f64,
    tree: &SeedTree,
) -> Result<Vec<DeployedEstimate>> {
    (0..subs.len())
        .into_par_iter()
        .map(|i| {
            let mut rng = tree.stream(&[domain::MECHANISM, i as u64]);
            corrupt_deploy_for_agent(i, subs, p, epsilon, &mut rng).map(|(e, _)| e)
        })
        .collect()
}

fn add_noise<R: Rng + ?Sized>(data: &Dataset, eta_sq: &[f64], rng: &mut R, mut trace: Option<&mut Vec<f64>>) -> Dataset {
    let sd: Vec<f64> = eta_sq.iter().map(|v| v.sqrt()).collect();
    let mut values = Vec::with_capacity(data.values().len());
    for point in data.points() {
        for (v, s) in point.iter().zip(&sd) {
            let z: f64 = StandardNormal.sample(rng);
            let noise = s * z;
            if let Some(t) = trace.as_deref_mut() {
                t.push(noise);
            }
            values.push(v + noise);
        }
    }
    Dataset::from_flat(data.dim(), values).expect("same shape as input")
}

/// Allocation of cross-check-and-corrupt plus the raw noise added to each
/// coordinate of the corrupted set (row-major, same layout as its values).
#[derive(Debug, Clone, PartialEq)]
pub struct TracedAllocation {
    pub allocation: Allocation,
    pub noise: Vec<f64>,
}

/// Agent `i`'s allocation under cross-check-and-corrupt.
pub fn cross_check_corrupt_for_agent<R: Rng + ?Sized>(
    i: usize,
    subs: &[Dataset],
    p: &ProblemParams,
    alpha: f64,
    rng: &mut R,
) -> Result<Allocation> {
    cross_check_corrupt_impl(i, subs, p, alpha, rng, None)
}

pub fn cross_check_corrupt_traced<R: Rng + ?Sized>(
    i: usize,
    subs: &[Dataset],
    p: &ProblemParams,
    alpha: f64,
    rng: &mut R,
) -> Result<TracedAllocation> {
    let mut noise = Vec::new();
    let allocation = cross_check_corrupt_impl(i, subs, p, alpha, rng, Some(&mut noise))?;
    Ok(TracedAllocation { allocation, noise })
}

fn cross_check_corrupt_impl<R: Rng + ?Sized>(
    i: usize,
    subs: &[Dataset],
    p: &ProblemParams,
    alpha: f64,
    rng: &mut R,
    trace: Option<&mut Vec<f64>>,
) -> Result<Allocation> {
    let d = check_submissions(subs)?;
    if d != p.dim() {
        return Err(Error::DimensionMismatch { expected: p.dim(), found: d });
    }
    let others = others_union(subs, i)?;
    if !p.uses_corruption() {
        return Ok(Allocation::uncorrupted(others));
    }
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::InvalidParam(format!("alpha must be finite and nonnegative, got {alpha}")));
    }

    let available = others.len();
    let take = available.min(p.n_star() as usize);
    let mut picked = index::sample(rng, available, take).into_vec();
    picked.sort_unstable();

    let mut clean = Dataset::with_capacity(d, take);
    let mut rest = Dataset::with_capacity(d, available - take);
    let mut next = picked.iter().peekable();
    for (j, point) in others.points().enumerate() {
        if next.peek() == Some(&&j) {
            next.next();
            clean.push(point)?;
        } else {
            rest.push(point)?;
        }
    }

    let (own_mean, clean_mean) = match (subs[i].mean(), clean.mean()) {
        (Some(a), Some(b)) => (a, b),
        // nothing to cross-check against: the corrupted part is withheld
        _ => {
            return Ok(Allocation { clean, corrupted: Dataset::empty(d), eta_sq: vec![f64::INFINITY; d] });
        }
    };
    let eta_sq: Vec<f64> = own_mean
        .iter()
        .zip(&clean_mean)
        .map(|(a, b)| alpha * alpha * (a - b) * (a - b))
        .collect();
    let corrupted = add_noise(&rest, &eta_sq, rng, trace);
    Ok(Allocation { clean, corrupted, eta_sq })
}

pub fn mech_cross_check_corrupt(
    subs: &[Dataset],
    p: &ProblemParams,
    alpha: f64,
    tree: &SeedTree,
) -> Result<Vec<Allocation>> {
    (0..subs.len())
        .into_par_iter()
        .map(|i| {
            let mut rng: ChaCha8Rng = tree.stream(&[domain::MECHANISM, i as u64]);
            cross_check_corrupt_for_agent(i, subs, p, alpha, &mut rng)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn canonical() -> ProblemParams {
        ProblemParams::new(1.0, 1.0 / 900.0, 9, 1).unwrap()
    }

    fn scalar_subs(sizes: &[usize], start: f64) -> Vec<Dataset> {
        let mut v = start;
        sizes
            .iter()
            .map(|&n| {
                let xs: Vec<f64> = (0..n)
                    .map(|_| {
                        v += 1.0;
                        v
                    })
                    .collect();
                Dataset::from_scalars(&xs)
            })
            .collect()
    }

    #[test]
    fn pool_returns_others() {
        let subs: Vec<Dataset> = [1.0, 2.0, 3.0].iter().map(|&v| Dataset::from_scalars(&[v])).collect();
        let out = mech_pool(&subs).unwrap();
        assert_eq!(out[0].values(), &[2.0, 3.0]);
        assert_eq!(out[2].values(), &[1.0, 2.0]);
        let empty = vec![Dataset::empty(1); 3];
        assert!(mech_pool(&empty).unwrap().iter().all(Dataset::is_empty));
    }

    #[test]
    fn size_check_threshold() {
        let p = canonical();
        let subs = scalar_subs(&[9, 10, 10, 10, 10, 10, 10, 10, 10], 0.0);
        let out = mech_size_check(&subs, &p).unwrap();
        assert!(out[0].is_empty());
        assert_eq!(out[1].len(), 79);
        let full = scalar_subs(&[10; 9], 0.0);
        assert!(mech_size_check(&full, &p).unwrap().iter().all(|a| a.len() == 80));
    }

    #[test]
    fn k_epsilon_values() {
        assert_eq!(k_epsilon(0.25).unwrap(), 2);
        assert_eq!(k_epsilon(0.5).unwrap(), 1);
        assert_eq!(k_epsilon(0.1).unwrap(), 5);
        assert!(k_epsilon(0.0).is_err());
    }

    #[test]
    fn beta_forms_agree_at_equilibrium() {
        // sum of submission sizes versus (|Y_i| + (m-1) n*)^2 at the recommended profile
        let p = canonical();
        for k in 1..=5 {
            let a = corrupt_deploy_beta_sq(90, &p, k).unwrap();
            let b = corrupt_deploy_beta_sq(10 + 8 * 10, &p, k).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn beta_matches_direct_formula() {
        let p = canonical();
        for k in 1..=5u32 {
            let kf = k as f64;
            let df = crate::params::double_factorial(2 * k as i64 - 1).unwrap() as f64;
            let direct = 90f64.powi(2) * 8f64.powi(k as i32 - 1)
                / (kf * df * (1.0f64 / 900.0).powf((kf - 2.0) / 2.0) * 9f64.powf(1.5 * kf));
            let got = corrupt_deploy_beta_sq(90, &p, k).unwrap();
            assert!((got - direct).abs() < 1e-12 * direct, "k = {k}");
        }
    }

    #[test]
    fn corrupt_deploy_equal_means() {
        let p = canonical();
        let subs: Vec<Dataset> = (0..9).map(|_| Dataset::from_scalars(&[1.0, 3.0])).collect();
        let mut rng = SeedTree::new(1).stream(&[0]);
        let (e, a) = corrupt_deploy_for_agent(0, &subs, &p, 0.25, &mut rng).unwrap();
        assert_eq!(a.eta_sq, vec![0.0]);
        assert_eq!(e.value, vec![2.0]);
    }

    #[test]
    fn corrupt_deploy_rejects_empty() {
        let p = canonical();
        let mut subs: Vec<Dataset> = (0..9).map(|_| Dataset::from_scalars(&[1.0])).collect();
        subs[4] = Dataset::empty(1);
        assert_eq!(
            mech_corrupt_deploy(&subs, &p, 0.5, &SeedTree::new(0)),
            Err(Error::EmptySubmission(4))
        );
    }

    #[test]
    fn quadratic_special_case() {
        let p = canonical();
        let subs: Vec<Dataset> = (0..9).map(|j| Dataset::from_scalars(&[j as f64])).collect();
        let mut rng = SeedTree::new(1).stream(&[0]);
        let (_, a) = corrupt_deploy_for_agent(0, &subs, &p, 0.5, &mut rng).unwrap();
        let beta_sq = corrupt_deploy_beta_sq(9, &p, 1).unwrap();
        let gap: f64 = 0.0 - 4.5;
        assert!((a.eta_sq[0] - beta_sq * gap * gap).abs() < 1e-12 * a.eta_sq[0]);
    }

    #[test]
    fn small_market_pools() {
        let p = ProblemParams::new(1.0, 1.0 / 64.0, 4, 1).unwrap();
        let subs = scalar_subs(&[2, 2, 2, 2], 0.0);
        let out = mech_cross_check_corrupt(&subs, &p, 0.0, &SeedTree::new(0)).unwrap();
        assert_eq!(out[0].clean.values(), &[3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        assert!(out[0].corrupted.is_empty());
        assert_eq!(out[0].eta_sq, vec![0.0]);
    }

    #[test]
    fn eta_from_mean_gap() {
        let p = canonical();
        // others are all 1.0, so every cross-check sample has mean 1
        let mut subs: Vec<Dataset> = (0..9).map(|_| Dataset::from_scalars(&[1.0; 10])).collect();
        subs[0] = Dataset::from_scalars(&[2.0; 10]);
        let mut rng = SeedTree::new(0).stream(&[0]);
        let a = cross_check_corrupt_for_agent(0, &subs, &p, 4.0, &mut rng).unwrap();
        assert_eq!(a.eta_sq, vec![16.0]);
    }

    #[test]
    fn equilibrium_sizes() {
        let p = canonical();
        let subs = scalar_subs(&[10; 9], 0.0);
        let out = mech_cross_check_corrupt(&subs, &p, 5.4, &SeedTree::new(3)).unwrap();
        for a in &out {
            assert_eq!(a.clean.len(), 10);
            assert_eq!(a.corrupted.len(), 70);
        }
    }

    #[test]
    fn partition_recovers_others() {
        let p = canonical();
        let subs = scalar_subs(&[10, 3, 12, 10, 0, 10, 10, 7, 10], 0.0);
        // agent 4 submitted nothing, so its corrupted part is withheld
        for i in (0..9).filter(|&i| i != 4) {
            let mut rng = SeedTree::new(11).stream(&[i as u64]);
            let t = cross_check_corrupt_traced(i, &subs, &p, 5.4, &mut rng).unwrap();
            let mut recovered: Vec<f64> = t.allocation.clean.values().to_vec();
            recovered.extend(t.allocation.corrupted.values().iter().zip(&t.noise).map(|(v, z)| v - z));
            recovered.sort_by(f64::total_cmp);
            let mut expected = others_union(&subs, i).unwrap().values().to_vec();
            expected.sort_by(f64::total_cmp);
            assert_eq!(recovered.len(), expected.len());
            for (a, b) in recovered.iter().zip(&expected) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn empty_submission_withholds_corrupted_part() {
        let p = canonical();
        let subs = scalar_subs(&[0, 10, 10, 10, 10, 10, 10, 10, 10], 0.0);
        let mut rng = SeedTree::new(0).stream(&[0]);
        let a = cross_check_corrupt_for_agent(0, &subs, &p, 5.4, &mut rng).unwrap();
        assert_eq!(a.clean.len(), 10);
        assert!(a.corrupted.is_empty());
        assert_eq!(a.eta_sq, vec![f64::INFINITY]);
    }

    #[test]
    fn shift_covariance() {
        let p = canonical();
        let subs = scalar_subs(&[10, 8, 12, 10, 10, 9, 10, 11, 10], 0.0);
        let shifted: Vec<Dataset> = subs.iter().map(|s| s.map_values(|v| v + 17.25)).collect();
        let tree = SeedTree::new(5);
        let a = mech_cross_check_corrupt(&subs, &p, 5.4, &tree).unwrap();
        let b = mech_cross_check_corrupt(&shifted, &p, 5.4, &tree).unwrap();
        for (x, y) in a.iter().zip(&b) {
            for (u, v) in x.eta_sq.iter().zip(&y.eta_sq) {
                assert!((u - v).abs() <= 1e-9 * (1.0 + u.abs()));
            }
            for (u, v) in x.clean.values().iter().zip(y.clean.values()) {
                assert!((v - u - 17.25).abs() < 1e-12);
            }
            for (u, v) in x.corrupted.values().iter().zip(y.corrupted.values()) {
                assert!((v - u - 17.25).abs() < 1e-6 * (1.0 + u.abs()));
            }
        }
    }

    #[test]
    fn size_check_permutation() {
        let p = canonical();
        let subs = scalar_subs(&[10, 5, 12, 10, 10, 10, 10, 10, 10], 0.0);
        let mut perm = subs.clone();
        perm.swap(0, 2);
        let a = mech_size_check(&subs, &p).unwrap();
        let b = mech_size_check(&perm, &p).unwrap();
        let sorted = |d: &Dataset| {
            let mut v = d.values().to_vec();
            v.sort_by(f64::total_cmp);
            v
        };
        assert_eq!(sorted(&a[0]), sorted(&b[2]));
        assert_eq!(sorted(&a[1]), sorted(&b[1]));
    }

    #[test]
    fn high_dim_noise_is_elementwise() {
        let p = ProblemParams::new(1.0, 1.0 / 300.0, 9, 3).unwrap();
        let mut subs: Vec<Dataset> = (0..9)
            .map(|_| Dataset::from_flat(3, vec![0.0; 30]).unwrap())
            .collect();
        subs[0] = Dataset::from_flat(3, [1.0, 0.0, 2.0].repeat(10)).unwrap();
        let mut rng = SeedTree::new(0).stream(&[0]);
        let a = cross_check_corrupt_for_agent(0, &subs, &p, 2.0, &mut rng).unwrap();
        assert_eq!(a.eta_sq, vec![4.0, 0.0, 16.0]);
        assert_eq!(a.clean.len(), 10);
        // the zero-variance coordinate is untouched
        assert!(a.corrupted.points().all(|pt| pt[1] == 0.0));
    }
}
