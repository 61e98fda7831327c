//! Globally adaptive Gauss-Kronrod (7/15) quadrature.
//!
//! Only what the risk formulas need: finite intervals and standard-normal
//! expectations of smooth bounded integrands. Normal expectations are
//! truncated to `[-12, 12]`, where the neglected mass is below `1e-32`.

use std::collections::BinaryHeap;
use std::cmp::Ordering;
use std::f64::consts::PI;

use crate::error::{Error, Result};

pub const NORMAL_TRUNCATION: f64 = 12.0;
pub const DEFAULT_ABS_TOL: f64 = 1e-12;
pub const MAX_SUBDIVISIONS: usize = 2000;

// Kronrod nodes (descending, last is the centre) and weights; Gauss weights
// for the 7-point rule sitting on the odd-indexed Kronrod nodes.
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}

impl Eq for Segment {}

impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Segment {
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(centre);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(centre - dx) + f(centre + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    Segment { a, b, value: kronrod * half, error: ((kronrod - gauss) * half).abs() }
}

/// `int_a^b f` to absolute tolerance `abs_tol`, bisecting the segment with
/// the largest error estimate until the summed estimate is below tolerance.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64) -> Result<f64> {
    integrate_with_breaks(f, &[a, b], abs_tol)
}

/// As [`integrate`], starting from the given ordered breakpoints.
pub fn integrate_with_breaks<F: Fn(f64) -> f64>(f: F, breaks: &[f64], abs_tol: f64) -> Result<f64> {
    if breaks.len() < 2 {
        return Err(Error::InvalidParam("need at least two breakpoints".into()));
    }
    let mut heap: BinaryHeap<Segment> = breaks.windows(2).map(|w| gk15(&f, w[0], w[1])).collect();
    for _ in 0..MAX_SUBDIVISIONS {
        let total_err: f64 = heap.iter().map(|s| s.error).sum();
        if total_err <= abs_tol {
            return finish(&heap);
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        heap.push(gk15(&f, worst.a, mid));
        heap.push(gk15(&f, mid, worst.b));
    }
    let estimate: f64 = heap.iter().map(|s| s.error).sum();
    if estimate <= abs_tol {
        return finish(&heap);
    }
    Err(Error::QuadratureFailure { tol: abs_tol, estimate })
}

fn finish(heap: &BinaryHeap<Segment>) -> Result<f64> {
    // sum in interval order so the result does not depend on heap layout
    let mut segs: Vec<&Segment> = heap.iter().collect();
    segs.sort_by(|x, y| x.a.total_cmp(&y.a));
    let v: f64 = segs.iter().map(|s| s.value).sum();
    if !v.is_finite() {
        return Err(Error::Overflow("quadrature"));
    }
    Ok(v)
}

pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// `E[f(X)]` for `X ~ N(0, 1)`.
pub fn expect_std_normal<F: Fn(f64) -> f64>(f: F, abs_tol: f64) -> Result<f64> {
    let t = NORMAL_TRUNCATION;
    let breaks = [-t, -6.0, -3.0, -1.0, 0.0, 1.0, 3.0, 6.0, t];
    integrate_with_breaks(|x| f(x) * std_normal_pdf(x), &breaks, abs_tol)
}
