//! Submission rules and the estimators an agent may apply to what the
//! mechanism returns.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanisms::Allocation;
use crate::params::{Dataset, ProblemParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EstimatorChoice {
    /// Unweighted mean of own data, clean and corrupted data.
    PlainMeanAll,
    /// Inverse-variance weights `1/sigma^2` and `1/(sigma^2 + eta^2)`.
    RecommendedWeighted,
    /// As `RecommendedWeighted` with a fixed `tau^2` in place of `eta^2`.
    FixedWeighted { tau_sq: f64 },
    /// Mean of own and clean data, ignoring corrupted data.
    CleanOnlyMean,
    OwnDataOnlyMean,
    /// Posterior mean under an `N(0, ell^2)` prior on each coordinate.
    PosteriorMean { ell: f64 },
}

impl EstimatorChoice {
    pub fn validate(&self) -> Result<()> {
        match *self {
            EstimatorChoice::FixedWeighted { tau_sq } if !(tau_sq >= 0.0) => {
                Err(Error::InvalidParam(format!("tau^2 must be nonnegative, got {tau_sq}")))
            }
            EstimatorChoice::PosteriorMean { ell } if !(ell > 0.0) => {
                Err(Error::InvalidParam(format!("ell must be positive, got {ell}")))
            }
            _ => Ok(()),
        }
    }

    /// Whether shifting every input point by `t` shifts the estimate by `t`.
    pub fn is_translation_equivariant(&self) -> bool {
        !matches!(self, EstimatorChoice::PosteriorMean { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SubmissionRule {
    Identity,
    /// Multiply every coordinate by `gamma`.
    Scale(f64),
    /// Add `delta` to every coordinate.
    Shift(f64),
    /// `|X|` copies of the point with every coordinate equal to `v`.
    SubmitConstant(f64),
    /// First `k` collected points.
    Subset(usize),
    /// `n_fake` draws from a Gaussian fitted to the collected data.
    FabricateFitGaussian(usize),
    Empty,
    /// Multiply every point by `(1 + sigma^2/(|X| ell^2))^{-1}`.
    ShrinkEll(f64),
}

impl SubmissionRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SubmissionRule::Scale(v) | SubmissionRule::Shift(v) | SubmissionRule::SubmitConstant(v)
                if !v.is_finite() =>
            {
                Err(Error::InvalidParam(format!("submission parameter must be finite, got {v}")))
            }
            SubmissionRule::ShrinkEll(ell) if !(ell > 0.0) => {
                Err(Error::InvalidParam(format!("ell must be positive, got {ell}")))
            }
            _ => Ok(()),
        }
    }

    pub fn is_translation_equivariant(&self) -> bool {
        match *self {
            SubmissionRule::Scale(g) => g == 1.0,
            SubmissionRule::SubmitConstant(_) | SubmissionRule::ShrinkEll(_) => false,
            _ => true,
        }
    }
}

/// Maps the collected dataset `x` to the dataset submitted to the mechanism.
/// Only `FabricateFitGaussian` draws from `rng`.
pub fn apply_submission<R: Rng + ?Sized>(
    rule: SubmissionRule,
    x: &Dataset,
    p: &ProblemParams,
    rng: &mut R,
) -> Result<Dataset> {
    rule.validate()?;
    let d = x.dim();
    Ok(match rule {
        SubmissionRule::Identity => x.clone(),
        SubmissionRule::Scale(g) => x.map_values(|v| g * v),
        SubmissionRule::Shift(delta) => x.map_values(|v| v + delta),
        SubmissionRule::SubmitConstant(v) => x.map_values(|_| v),
        SubmissionRule::Subset(k) => {
            if k > x.len() {
                return Err(Error::SubsetTooLarge { requested: k, available: x.len() });
            }
            x.prefix(k)
        }
        SubmissionRule::FabricateFitGaussian(n_fake) => {
            let mean = x.mean().unwrap_or_else(|| vec![0.0; d]);
            // with fewer than two points no variance can be fitted; fall back to sigma
            let sd: Vec<f64> = match x.variance() {
                Some(v) => v.into_iter().map(f64::sqrt).collect(),
                None => vec![p.sigma(); d],
            };
            let mut values = Vec::with_capacity(n_fake * d);
            for _ in 0..n_fake {
                for k in 0..d {
                    let z: f64 = StandardNormal.sample(rng);
                    values.push(mean[k] + sd[k] * z);
                }
            }
            Dataset::from_flat(d, values)?
        }
        SubmissionRule::Empty => Dataset::empty(d),
        SubmissionRule::ShrinkEll(ell) => {
            if x.is_empty() {
                Dataset::empty(d)
            } else {
                let factor = shrink_factor(x.len(), p.sigma(), ell);
                x.map_values(|v| factor * v)
            }
        }
    })
}

/// `(1 + sigma^2/(n ell^2))^{-1}`.
pub fn shrink_factor(n: usize, sigma: f64, ell: f64) -> f64 {
    1.0 / (1.0 + sigma * sigma / (n as f64 * ell * ell))
}

/// Agent estimate of the mean from own data `x` and the allocation.
pub fn estimate(choice: EstimatorChoice, x: &Dataset, alloc: &Allocation, sigma: f64) -> Result<Vec<f64>> {
    choice.validate()?;
    let d = alloc.eta_sq.len();
    for ds in [x, &alloc.clean, &alloc.corrupted] {
        if ds.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, found: ds.dim() });
        }
    }
    let s2 = sigma * sigma;
    let own = x.sums();
    let clean = alloc.clean.sums();
    let corrupt = alloc.corrupted.sums();
    let n_trusted = (x.len() + alloc.clean.len()) as f64;
    let n_corrupt = alloc.corrupted.len() as f64;

    let mut out = Vec::with_capacity(d);
    for k in 0..d {
        let trusted_sum = own[k] + clean[k];
        let (num, den) = match choice {
            EstimatorChoice::PlainMeanAll => (trusted_sum + corrupt[k], n_trusted + n_corrupt),
            EstimatorChoice::CleanOnlyMean => (trusted_sum, n_trusted),
            EstimatorChoice::OwnDataOnlyMean => (own[k], x.len() as f64),
            EstimatorChoice::RecommendedWeighted => {
                weighted(trusted_sum, n_trusted, corrupt[k], n_corrupt, s2, alloc.eta_sq[k])
            }
            EstimatorChoice::FixedWeighted { tau_sq } => {
                weighted(trusted_sum, n_trusted, corrupt[k], n_corrupt, s2, tau_sq)
            }
            EstimatorChoice::PosteriorMean { ell } => {
                let (num, den) = weighted(trusted_sum, n_trusted, corrupt[k], n_corrupt, s2, alloc.eta_sq[k]);
                (num, den + 1.0 / (ell * ell))
            }
        };
        if !(den > 0.0) {
            return Err(Error::EmptyInput);
        }
        out.push(num / den);
    }
    Ok(out)
}

fn weighted(trusted_sum: f64, n_trusted: f64, corrupt_sum: f64, n_corrupt: f64, s2: f64, eta_sq: f64) -> (f64, f64) {
    // an infinite corruption variance gives the corrupted data zero weight
    let w = if eta_sq.is_finite() { 1.0 / (s2 + eta_sq) } else { 0.0 };
    let corrupt_term = if w == 0.0 { 0.0 } else { w * corrupt_sum };
    (trusted_sum / s2 + corrupt_term, n_trusted / s2 + w * n_corrupt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedTree;
    use proptest::prelude::*;

    fn canonical() -> ProblemParams {
        ProblemParams::new(1.0, 1.0 / 900.0, 9, 1).unwrap()
    }

    fn alloc(clean: &[f64], corrupted: &[f64], eta_sq: f64) -> Allocation {
        Allocation {
            clean: Dataset::from_scalars(clean),
            corrupted: Dataset::from_scalars(corrupted),
            eta_sq: vec![eta_sq],
        }
    }

    #[test]
    fn weighted_hand_example() {
        let x = Dataset::from_scalars(&[0.0, 2.0]);
        let a = alloc(&[4.0], &[10.0], 1.0);
        let v = estimate(EstimatorChoice::RecommendedWeighted, &x, &a, 1.0).unwrap()[0];
        assert!((v - 22.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn zero_eta_is_plain_mean() {
        let x = Dataset::from_scalars(&[0.0, 2.0]);
        let a = alloc(&[4.0], &[10.0, -3.0], 0.0);
        let w = estimate(EstimatorChoice::RecommendedWeighted, &x, &a, 1.7).unwrap()[0];
        let plain = estimate(EstimatorChoice::PlainMeanAll, &x, &a, 1.7).unwrap()[0];
        assert!((w - plain).abs() < 1e-14);
        assert!((plain - 13.0 / 5.0).abs() < 1e-15);
    }

    #[test]
    fn no_corrupted_data_is_sample_mean() {
        let x = Dataset::from_scalars(&[1.0, 2.0]);
        let a = alloc(&[6.0], &[], 3.0);
        let v = estimate(EstimatorChoice::RecommendedWeighted, &x, &a, 1.0).unwrap()[0];
        assert!((v - 3.0).abs() < 1e-15);
    }

    #[test]
    fn infinite_eta_ignores_corrupted() {
        let x = Dataset::from_scalars(&[1.0]);
        let a = alloc(&[3.0], &[100.0], f64::INFINITY);
        let v = estimate(EstimatorChoice::RecommendedWeighted, &x, &a, 1.0).unwrap()[0];
        assert_eq!(v, 2.0);
    }

    #[test]
    fn posterior_mean_limit() {
        let x = Dataset::from_scalars(&[0.0, 2.0]);
        let a = alloc(&[4.0], &[10.0], 1.0);
        let w = estimate(EstimatorChoice::RecommendedWeighted, &x, &a, 1.0).unwrap()[0];
        let far = estimate(EstimatorChoice::PosteriorMean { ell: 1e8 }, &x, &a, 1.0).unwrap()[0];
        let near = estimate(EstimatorChoice::PosteriorMean { ell: 0.1 }, &x, &a, 1.0).unwrap()[0];
        assert!((w - far).abs() < 1e-12);
        assert!(near.abs() < w.abs());
    }

    #[test]
    fn empty_input_rejected() {
        let x = Dataset::empty(1);
        let a = alloc(&[], &[], 0.0);
        assert_eq!(estimate(EstimatorChoice::PlainMeanAll, &x, &a, 1.0), Err(Error::EmptyInput));
        let b = alloc(&[1.0], &[], 0.0);
        assert_eq!(estimate(EstimatorChoice::OwnDataOnlyMean, &x, &b, 1.0), Err(Error::EmptyInput));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let x = Dataset::from_points(2, &[vec![1.0, 2.0]]).unwrap();
        let a = alloc(&[1.0], &[], 0.0);
        assert!(matches!(
            estimate(EstimatorChoice::PlainMeanAll, &x, &a, 1.0),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn submission_rules() {
        let p = canonical();
        let mut rng = SeedTree::new(0).stream(&[0]);
        let x = Dataset::from_scalars(&[2.0, 4.0]);
        let apply = |r, rng: &mut _| apply_submission(r, &x, &p, rng).unwrap();
        assert_eq!(apply(SubmissionRule::Identity, &mut rng), x);
        assert_eq!(apply(SubmissionRule::Scale(0.5), &mut rng).values(), &[1.0, 2.0]);
        assert_eq!(apply(SubmissionRule::Shift(1.0), &mut rng).values(), &[3.0, 5.0]);
        assert_eq!(apply(SubmissionRule::SubmitConstant(0.0), &mut rng).values(), &[0.0, 0.0]);
        assert_eq!(apply(SubmissionRule::Subset(1), &mut rng).values(), &[2.0]);
        assert!(apply(SubmissionRule::Empty, &mut rng).is_empty());
        assert_eq!(apply(SubmissionRule::FabricateFitGaussian(7), &mut rng).len(), 7);
        assert_eq!(
            apply_submission(SubmissionRule::Subset(3), &x, &p, &mut rng),
            Err(Error::SubsetTooLarge { requested: 3, available: 2 })
        );
    }

    #[test]
    fn shrink_approaches_identity() {
        let p = canonical();
        let mut rng = SeedTree::new(0).stream(&[0]);
        let x = Dataset::from_scalars(&[2.0, -4.0, 7.5]);
        let y = apply_submission(SubmissionRule::ShrinkEll(1e9), &x, &p, &mut rng).unwrap();
        for (a, b) in x.values().iter().zip(y.values()) {
            assert!((a - b).abs() < 1e-15);
        }
        let f = shrink_factor(3, 1.0, 1.0);
        assert!((f - 0.75).abs() < 1e-15);
    }

    #[test]
    fn fabrication_without_data_uses_sigma() {
        let p = ProblemParams::new(2.0, 4.0 / 900.0, 9, 1).unwrap();
        let mut rng = SeedTree::new(3).stream(&[1]);
        let y = apply_submission(SubmissionRule::FabricateFitGaussian(20_000), &Dataset::empty(1), &p, &mut rng)
            .unwrap();
        let var = y.variance().unwrap()[0];
        assert!((var - 4.0).abs() < 0.2, "variance {var}");
    }

    fn arb_values(max: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-50.0f64..50.0, 0..max)
    }

    fn choices() -> Vec<EstimatorChoice> {
        vec![
            EstimatorChoice::PlainMeanAll,
            EstimatorChoice::RecommendedWeighted,
            EstimatorChoice::FixedWeighted { tau_sq: 2.5 },
            EstimatorChoice::CleanOnlyMean,
        ]
    }

    proptest! {
        #[test]
        fn location_equivariance(
            x in prop::collection::vec(-50.0f64..50.0, 1..8),
            clean in arb_values(8),
            corrupted in arb_values(8),
            eta in 0.0f64..20.0,
            t in -100.0f64..100.0,
        ) {
            let a = alloc(&clean, &corrupted, eta);
            let shifted = alloc(
                &clean.iter().map(|v| v + t).collect::<Vec<_>>(),
                &corrupted.iter().map(|v| v + t).collect::<Vec<_>>(),
                eta,
            );
            let xs = Dataset::from_scalars(&x);
            let xt = xs.map_values(|v| v + t);
            for c in choices() {
                let e0 = estimate(c, &xs, &a, 1.3).unwrap()[0];
                let e1 = estimate(c, &xt, &shifted, 1.3).unwrap()[0];
                prop_assert!((e1 - e0 - t).abs() < 1e-9, "{c:?}: {e0} {e1}");
            }
        }

        #[test]
        fn scale_equivariance(
            x in prop::collection::vec(-50.0f64..50.0, 1..8),
            clean in arb_values(8),
            corrupted in arb_values(8),
            eta in 0.0f64..20.0,
            s in 0.01f64..100.0,
        ) {
            let xs = Dataset::from_scalars(&x);
            let a = alloc(&clean, &corrupted, eta);
            let scaled = Allocation {
                clean: a.clean.map_values(|v| v * s),
                corrupted: a.corrupted.map_values(|v| v * s),
                eta_sq: vec![eta * s * s],
            };
            let e0 = estimate(EstimatorChoice::RecommendedWeighted, &xs, &a, 1.3).unwrap()[0];
            let e1 = estimate(EstimatorChoice::RecommendedWeighted, &xs.map_values(|v| v * s), &scaled, 1.3 * s)
                .unwrap()[0];
            prop_assert!((e1 - s * e0).abs() <= 1e-9 * (1.0 + (s * e0).abs()));
        }

        #[test]
        fn larger_eta_pulls_toward_trusted_mean(
            x in prop::collection::vec(-50.0f64..50.0, 1..8),
            corrupted in prop::collection::vec(-50.0f64..50.0, 1..8),
            eta in 0.0f64..20.0,
            extra in 0.1f64..20.0,
        ) {
            let xs = Dataset::from_scalars(&x);
            let trusted = xs.mean().unwrap()[0];
            let lo = estimate(EstimatorChoice::RecommendedWeighted, &xs, &alloc(&[], &corrupted, eta), 1.0).unwrap()[0];
            let hi = estimate(EstimatorChoice::RecommendedWeighted, &xs, &alloc(&[], &corrupted, eta + extra), 1.0).unwrap()[0];
            prop_assert!((hi - trusted).abs() <= (lo - trusted).abs() + 1e-12);
        }

        #[test]
        fn plain_mean_is_arithmetic_mean(x in prop::collection::vec(-1e3f64..1e3, 1..50)) {
            let xs = Dataset::from_scalars(&x);
            let v = estimate(EstimatorChoice::PlainMeanAll, &xs, &alloc(&[], &[], 0.0), 1.0).unwrap()[0];
            let m = x.iter().sum::<f64>() / x.len() as f64;
            prop_assert!((v - m).abs() <= 1e-12 * (1.0 + m.abs()));
        }
    }
}
