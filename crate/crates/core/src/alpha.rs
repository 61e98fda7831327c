//! The corruption modulator `alpha`.
//!
//! `alpha` is the root above `sqrt(n*)` of the function `G` obtained by
//! setting the derivative of an agent's penalty at `n*` to zero. Written in
//! `A = alpha / sqrt(n*)`, `G` depends on `m` only:
//!
//! ```text
//! G(A; m) = (4(m-4)/(m-2) A^2 - 1) 4A/sqrt(m)
//!         - (4(m+1)/m A^2 - 1) sqrt(2 pi) erfcx(sqrt(m) / (2 sqrt(2) A))
//! ```
//!
//! where `erfcx(z) = exp(z^2) erfc(z)`. Working with `erfcx` avoids the
//! `exp(m / (8 A^2))` factor that overflows for large `m`.

use std::f64::consts::PI;

use errorfunctions::RealErrorFunctions;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ProblemParams;

pub const MAX_BISECTION_ITERATIONS: usize = 200;
pub const SCAN_POINTS: usize = 64;

/// `exp(x^2) erfc(x)`.
pub fn scaled_erfc(x: f64) -> f64 {
    x.erfcx()
}

/// Lower bound `pi^{-1/2} e^{-x^2} (1/x - 1/(2x^3))` on `erfc(x)`.
pub fn erfc_lb(x: f64) -> Result<f64> {
    Ok((-x * x).exp() * scaled_erfc_lb(x)?)
}

/// Upper bound `pi^{-1/2} e^{-x^2} (1/x - 1/(2x^3) + 3/(4x^5))` on `erfc(x)`.
pub fn erfc_ub(x: f64) -> Result<f64> {
    Ok((-x * x).exp() * scaled_erfc_ub(x)?)
}

/// `e^{x^2} erfc_lb(x)`.
pub fn scaled_erfc_lb(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::NonpositiveX(x));
    }
    Ok((1.0 / x - 0.5 / x.powi(3)) / PI.sqrt())
}

/// `e^{x^2} erfc_ub(x)`.
pub fn scaled_erfc_ub(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::NonpositiveX(x));
    }
    Ok((1.0 / x - 0.5 / x.powi(3) + 0.75 / x.powi(5)) / PI.sqrt())
}

fn g_with_kernel(a: f64, m: usize, kernel: f64) -> f64 {
    let mf = m as f64;
    let a2 = a * a;
    let poly = (4.0 * (mf - 4.0) / (mf - 2.0) * a2 - 1.0) * 4.0 * a / mf.sqrt();
    let coeff = 4.0 * (mf + 1.0) / mf * a2 - 1.0;
    poly - coeff * (2.0 * PI).sqrt() * kernel
}

fn kernel_arg(a: f64, m: usize) -> f64 {
    (m as f64).sqrt() / (2.0 * 2f64.sqrt() * a)
}

/// `G` as a function of the normalised modulator `A = alpha / sqrt(n*)`.
pub fn g_normalized(a: f64, m: usize) -> Result<f64> {
    check_regime(m)?;
    if !(a > 0.0) {
        return Err(Error::NonpositiveX(a));
    }
    let g = g_with_kernel(a, m, scaled_erfc(kernel_arg(a, m)));
    if !g.is_finite() {
        return Err(Error::Overflow("g_normalized"));
    }
    Ok(g)
}

/// `(G_LB(A), G_UB(A))`, obtained by replacing `erfc` with its upper and
/// lower bounds respectively.
///
/// With the two-term lower bound the erfc part cancels against the
/// polynomial part exactly, leaving
/// `G_UB(A) = 64 A^3 ((m+1)(m-2)(A^2-1) - 2) / (sqrt(m) m^2 (m-2))`,
/// which is evaluated in this form to avoid cancellation for large `m`.
pub fn g_bounds_normalized(a: f64, m: usize) -> Result<(f64, f64)> {
    check_regime(m)?;
    if !(a > 0.0) {
        return Err(Error::NonpositiveX(a));
    }
    let mf = m as f64;
    let a2 = a * a;
    let ub = 64.0 * a * a2 * ((mf + 1.0) * (mf - 2.0) * (a2 - 1.0) - 2.0) / (mf.sqrt() * mf * mf * (mf - 2.0));
    let z = kernel_arg(a, m);
    let coeff = 4.0 * (mf + 1.0) / mf * a2 - 1.0;
    // the third term of the upper erfc bound, times sqrt(2 pi)
    let lb = ub - coeff * 2f64.sqrt() * 0.75 / z.powi(5);
    Ok((lb, ub))
}

/// `G(alpha)` for the given market. Uses `n*`, which already carries the
/// `c -> c/d` substitution when `d > 1`.
pub fn g_of_alpha(alpha: f64, p: &ProblemParams) -> Result<f64> {
    g_normalized(alpha / p.n_star_f64().sqrt(), p.agents())
}

pub fn g_bounds(alpha: f64, p: &ProblemParams) -> Result<(f64, f64)> {
    g_bounds_normalized(alpha / p.n_star_f64().sqrt(), p.agents())
}

fn check_regime(m: usize) -> Result<()> {
    if m < 5 {
        return Err(Error::NoCorruptionRegime(m));
    }
    Ok(())
}

/// Bracket constant: 20 for `m <= 20`, 5 above.
pub fn c_m(m: usize) -> f64 {
    if m <= 20 {
        20.0
    } else {
        5.0
    }
}

/// Normalised bracket `(1, 1 + C_m/m)` for `A`.
pub fn normalized_bracket(m: usize) -> (f64, f64) {
    (1.0, 1.0 + c_m(m) / m as f64)
}

/// Bracket `[sqrt(n*), (1 + C_m/m) sqrt(n*)]` for `alpha`.
pub fn bracket(p: &ProblemParams) -> (f64, f64) {
    let s = p.n_star_f64().sqrt();
    let (lo, hi) = normalized_bracket(p.agents());
    (lo * s, hi * s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaSolution {
    pub alpha: f64,
    pub a_m: f64,
    pub bracket_lo: f64,
    pub bracket_hi: f64,
    pub residual: f64,
    pub iterations: usize,
    pub warnings: Vec<String>,
}

/// Default bisection tolerance on `alpha`: `1e-12 sqrt(n*)`.
pub fn default_tolerance(p: &ProblemParams) -> f64 {
    1e-12 * p.n_star_f64().sqrt()
}

/// Bisection for the root of `G` in the proven bracket.
pub fn solve_alpha(p: &ProblemParams, tol: f64) -> Result<AlphaSolution> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParam(format!("tolerance must be positive, got {tol}")));
    }
    let m = p.agents();
    check_regime(m)?;
    let s = p.n_star_f64().sqrt();
    let (a_lo, a_hi) = normalized_bracket(m);
    let root = bisect_normalized(m, a_lo, a_hi, tol / s)?;

    let mut warnings = Vec::new();
    let changes = count_sign_changes(m, a_lo, a_hi, SCAN_POINTS)?;
    if changes > 1 {
        warnings.push(format!(
            "G changes sign {changes} times on a {SCAN_POINTS}-point grid over the bracket; returned the bisection root"
        ));
    }
    Ok(AlphaSolution {
        alpha: root.a * s,
        a_m: root.a,
        bracket_lo: a_lo * s,
        bracket_hi: a_hi * s,
        residual: root.g,
        iterations: root.iterations,
        warnings,
    })
}

/// Solves for `A_m` alone (no market needed), to tolerance `tol` on `A`.
pub fn solve_a_m(m: usize, tol: f64) -> Result<f64> {
    check_regime(m)?;
    let (lo, hi) = normalized_bracket(m);
    Ok(bisect_normalized(m, lo, hi, tol)?.a)
}

struct Root {
    a: f64,
    g: f64,
    iterations: usize,
}

fn bisect_normalized(m: usize, lo: f64, hi: f64, tol: f64) -> Result<Root> {
    let g_lo = g_normalized(lo, m)?;
    let g_hi = g_normalized(hi, m)?;
    if g_lo == 0.0 {
        return Ok(Root { a: lo, g: 0.0, iterations: 0 });
    }
    if g_hi == 0.0 {
        return Ok(Root { a: hi, g: 0.0, iterations: 0 });
    }
    if g_lo.signum() == g_hi.signum() {
        return Err(Error::NoSignChange { lo, hi, g_lo, g_hi });
    }
    let (mut lo, mut hi, mut g_lo) = (lo, hi, g_lo);
    for it in 1..=MAX_BISECTION_ITERATIONS {
        let mid = 0.5 * (lo + hi);
        let g_mid = g_normalized(mid, m)?;
        if g_mid == 0.0 || mid <= lo || mid >= hi {
            return Ok(Root { a: mid, g: g_mid, iterations: it });
        }
        if g_mid.signum() == g_lo.signum() {
            lo = mid;
            g_lo = g_mid;
        } else {
            hi = mid;
        }
        if hi - lo <= tol {
            let a = 0.5 * (lo + hi);
            return Ok(Root { a, g: g_normalized(a, m)?, iterations: it });
        }
    }
    Err(Error::MaxIterations(MAX_BISECTION_ITERATIONS))
}

/// Number of sign changes of `G` on `points` equispaced nodes of `[lo, hi]`.
pub fn count_sign_changes(m: usize, lo: f64, hi: f64, points: usize) -> Result<usize> {
    let step = (hi - lo) / (points - 1) as f64;
    let values: Vec<f64> = (0..points)
        .into_par_iter()
        .map(|i| g_normalized(lo + step * i as f64, m))
        .collect::<Result<_>>()?;
    Ok(values
        .windows(2)
        .filter(|w| w[0] != 0.0 && w[1] != 0.0 && w[0].signum() != w[1].signum())
        .count())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const ERFC_3: f64 = 2.209049699858544e-5;

    #[test]
    fn erfc_bounds_at_one() {
        assert!((erfc_lb(1.0).unwrap() - 0.10377687435514868).abs() < 1e-15);
        assert!((erfc_ub(1.0).unwrap() - 0.25944218588787169).abs() < 1e-15);
    }

    #[test]
    fn erfc_sandwich_at_three() {
        assert!(erfc_lb(3.0).unwrap() <= ERFC_3);
        assert!(ERFC_3 <= erfc_ub(3.0).unwrap());
    }

    #[test]
    fn erfc_bounds_reject_nonpositive() {
        assert_eq!(erfc_lb(0.0), Err(Error::NonpositiveX(0.0)));
        assert_eq!(erfc_ub(-1.0), Err(Error::NonpositiveX(-1.0)));
    }

    #[test]
    fn erfc_sandwich_log_grid() {
        for i in 0..=200 {
            let x = 0.3 * (20.0f64 / 0.3).powf(i as f64 / 200.0);
            let e = scaled_erfc(x);
            assert!(scaled_erfc_lb(x).unwrap() <= e * (1.0 + 1e-14), "x = {x}");
            assert!(e <= scaled_erfc_ub(x).unwrap() * (1.0 + 1e-14), "x = {x}");
        }
    }

    #[test]
    fn upper_bound_at_lower_endpoint() {
        for m in [5usize, 9, 20, 21, 100, 500] {
            let (_, ub) = g_bounds_normalized(1.0, m).unwrap();
            let mf = m as f64;
            let expected = -128.0 / ((mf - 2.0) * mf.powf(2.5));
            assert!(((ub - expected) / expected).abs() < 1e-10, "m = {m}: {ub} vs {expected}");
        }
    }

    #[test]
    fn g_signs_at_bracket_ends() {
        for m in 5..=500 {
            let (lo, hi) = normalized_bracket(m);
            assert!(g_normalized(lo, m).unwrap() < 0.0, "m = {m}");
            assert!(g_normalized(hi, m).unwrap() > 0.0, "m = {m}");
        }
    }

    #[test]
    fn bounds_match_direct_kernel_form() {
        for m in [5usize, 9, 20] {
            for a in [1.0, 1.3, 2.0] {
                let z = kernel_arg(a, m);
                let (lb, ub) = g_bounds_normalized(a, m).unwrap();
                let ub_direct = g_with_kernel(a, m, scaled_erfc_lb(z).unwrap());
                let lb_direct = g_with_kernel(a, m, scaled_erfc_ub(z).unwrap());
                assert!((ub - ub_direct).abs() < 1e-12, "m = {m}, A = {a}");
                assert!((lb - lb_direct).abs() < 1e-12, "m = {m}, A = {a}");
            }
        }
    }

    #[test]
    fn g_bounds_sandwich_on_bracket() {
        for m in [5usize, 9, 20, 21, 50, 100] {
            let (lo, hi) = normalized_bracket(m);
            for i in 0..=40 {
                let a = lo + (hi - lo) * i as f64 / 40.0;
                let g = g_normalized(a, m).unwrap();
                let (gl, gu) = g_bounds_normalized(a, m).unwrap();
                let slack = 1e-12 * (1.0 + g.abs());
                assert!(gl <= g + slack && g <= gu + slack, "m = {m}, A = {a}");
            }
        }
    }

    #[test]
    fn small_markets_rejected() {
        let p = ProblemParams::new(1.0, 1.0 / 64.0, 4, 1).unwrap();
        assert_eq!(solve_alpha(&p, 1e-12), Err(Error::NoCorruptionRegime(4)));
        assert!(matches!(g_of_alpha(1.0, &p), Err(Error::NoCorruptionRegime(4))));
    }

    #[test]
    fn canonical_root() {
        let p = ProblemParams::new(1.0, 1.0 / 900.0, 9, 1).unwrap();
        let sol = solve_alpha(&p, default_tolerance(&p)).unwrap();
        assert!((sol.alpha - 5.42636506800702447).abs() < 1e-10);
        assert!((sol.a_m - 1.71596730304766819).abs() < 1e-11);
        assert!(sol.residual.abs() < 1e-9);
        assert!(sol.warnings.is_empty());
        assert!(sol.bracket_lo < sol.alpha && sol.alpha < sol.bracket_hi);
    }

    #[test]
    fn large_market_root() {
        // n* = 1/sqrt(900 * c) = 30 with c = 1/810000
        let p = ProblemParams::new(1.0, 1.0 / 810_000.0, 900, 1).unwrap();
        assert_eq!(p.n_star(), 30);
        let sol = solve_alpha(&p, default_tolerance(&p)).unwrap();
        assert!(sol.a_m > 1.0 && sol.a_m < 1.0 + 5.0 / 900.0);
    }

    #[test]
    fn high_dim_root_shares_a_m() {
        let p1 = ProblemParams::new(1.0, 1.0 / 900.0, 9, 1).unwrap();
        let p3 = ProblemParams::new(1.0, 1.0 / 300.0, 9, 3).unwrap();
        let a1 = solve_alpha(&p1, 1e-13).unwrap();
        let a3 = solve_alpha(&p3, 1e-13).unwrap();
        assert!((a1.a_m - a3.a_m).abs() < 1e-12);
    }

    #[test]
    fn refinement_moves_root_within_tolerance() {
        let p = ProblemParams::new(1.0, 1.0 / 2000.0, 20, 1).unwrap();
        let tol = 1e-6;
        let coarse = solve_alpha(&p, tol).unwrap();
        let fine = solve_alpha(&p, tol / 10.0).unwrap();
        assert!((coarse.alpha - fine.alpha).abs() <= tol);
    }

    #[test]
    fn reference_roots() {
        let cases = [
            (5, 4.27052649557607),
            (20, 1.24480805115588856),
            (21, 1.23144706925831073),
            (100, 1.04503815040003863),
            (500, 1.00899088983648313),
        ];
        for (m, a) in cases {
            let got = solve_a_m(m, 1e-14).unwrap();
            assert!((got - a).abs() < 1e-10, "m = {m}: {got} vs {a}");
        }
    }

    #[test]
    fn single_sign_change_on_bracket() {
        for m in [5usize, 9, 20, 21, 100, 500] {
            let (lo, hi) = normalized_bracket(m);
            assert_eq!(count_sign_changes(m, lo, hi, SCAN_POINTS).unwrap(), 1);
        }
    }

    proptest! {
        #[test]
        fn erfc_bounds_ordered(x in 0.05f64..50.0) {
            let lb = scaled_erfc_lb(x).unwrap();
            let ub = scaled_erfc_ub(x).unwrap();
            prop_assert!(lb < ub);
        }
    }
}
