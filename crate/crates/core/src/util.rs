//! Small shared numerics: torus arithmetic, golden-section line search and a
//! parallel map that is bit-identical to its sequential counterpart.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `0..n` collecting results in index order. With the
/// `parallel` feature the map runs on the rayon pool; each index is computed
/// independently so the output is bit-identical to the sequential fill.
pub fn map_indexed<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Wrap a coordinate into the fundamental domain `[0, 1)`.
pub fn wrap01(x: f64) -> f64 {
    let y = x.rem_euclid(1.0);
    // rem_euclid can return 1.0 when x is a tiny negative number.
    if y >= 1.0 {
        y - 1.0
    } else {
        y
    }
}

/// Wrap every coordinate of a point into `[0, 1)^D`.
pub fn wrap_point<const D: usize>(x: &[f64; D]) -> [f64; D] {
    let mut y = [0.0; D];
    for i in 0..D {
        y[i] = wrap01(x[i]);
    }
    y
}

/// Signed distance of two angles on the unit circle, in `[-1/2, 1/2)`.
pub fn circ_diff(a: f64, b: f64) -> f64 {
    let mut d = (a - b).rem_euclid(1.0);
    if d >= 0.5 {
        d -= 1.0;
    }
    d
}

/// Euclidean distance on the flat torus `T^D`.
pub fn torus_dist<const D: usize>(a: &[f64; D], b: &[f64; D]) -> f64 {
    let mut s = 0.0;
    for i in 0..D {
        let d = circ_diff(a[i], b[i]);
        s += d * d;
    }
    s.sqrt()
}

pub fn dot<const D: usize>(a: &[f64; D], b: &[f64; D]) -> f64 {
    let mut s = 0.0;
    for i in 0..D {
        s += a[i] * b[i];
    }
    s
}

pub fn norm<const D: usize>(a: &[f64; D]) -> f64 {
    dot(a, a).sqrt()
}

const INV_GOLDEN: f64 = 0.618_033_988_749_894_9; // (sqrt(5)-1)/2

/// Golden-section minimization of `f` on `[lo, hi]`, run for a fixed number
/// of shrink steps derived from `tol` (deterministic candidate sequence).
/// Returns the best probed `(x, f(x))`, which never exceeds the bracket.
pub fn golden_min(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    debug_assert!(hi > lo);
    let width = hi - lo;
    let iters = if tol >= width {
        0
    } else {
        ((tol / width).ln() / INV_GOLDEN.ln()).ceil() as usize
    };
    let mut a = lo;
    let mut b = hi;
    let mut x1 = b - INV_GOLDEN * (b - a);
    let mut x2 = a + INV_GOLDEN * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let mut best = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
    for _ in 0..iters {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_GOLDEN * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_GOLDEN * (b - a);
            f2 = f(x2);
        }
        let (x, fx) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
        if fx < best.1 {
            best = (x, fx);
        }
    }
    best
}

/// Golden-section maximization; mirror of [`golden_min`].
pub fn golden_max(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    let (x, negfx) = golden_min(|x| -f(x), lo, hi, tol);
    (x, -negfx)
}
