//! Bracketing root finders and a golden-section minimizer.
//!
//! Every target function in this crate is a cheap scalar, so bisection is
//! used throughout.

use crate::error::{Error, Result};

/// Scans `(lo, hi]` on `n` equally spaced points and returns the first
/// subinterval `[a, b]` over which `f` changes sign (or hits zero at `b`).
pub fn scan_sign_change<F>(f: &F, lo: f64, hi: f64, n: usize) -> Option<(f64, f64)>
where
    F: Fn(f64) -> f64,
{
    let h = (hi - lo) / n as f64;
    let mut a = lo + h;
    let mut fa = f(a);
    if fa == 0.0 {
        return Some((a, a));
    }
    for i in 2..=n {
        let b = lo + i as f64 * h;
        let fb = f(b);
        if fb == 0.0 || (fa < 0.0) != (fb < 0.0) {
            return Some((a, b));
        }
        a = b;
        fa = fb;
    }
    None
}

/// Bisection on a bracket with `f(a)` and `f(b)` of opposite sign, until the
/// bracket is narrower than `tol` or no longer splits in floating point.
pub fn bisect<F>(f: &F, mut a: f64, mut b: f64, tol: f64) -> f64
where
    F: Fn(f64) -> f64,
{
    let mut fa = f(a);
    if fa == 0.0 {
        return a;
    }
    if f(b) == 0.0 {
        return b;
    }
    while (b - a).abs() > tol {
        let m = 0.5 * (a + b);
        if m <= a.min(b) || m >= a.max(b) {
            break;
        }
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if (fm < 0.0) == (fa < 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Smallest root of `f` on `(lo, hi]`, located by a sign-change scan with
/// `n` points and refined by bisection to width `tol`.
pub fn first_root<F>(what: &'static str, f: &F, lo: f64, hi: f64, n: usize, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    match scan_sign_change(f, lo, hi, n) {
        Some((a, b)) if a == b => Ok(a),
        Some((a, b)) => Ok(bisect(f, a, b, tol)),
        None => Err(Error::RootBracketing { what, lo, hi }),
    }
}

/// Golden-section search for the minimizer of a unimodal `f` on `[a, b]`.
pub fn golden_section_min<F>(f: &F, mut a: f64, mut b: f64, tol: f64) -> f64
where
    F: Fn(f64) -> f64,
{
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}
