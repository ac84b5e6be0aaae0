//! Bracketed scalar root finding and a golden-section maximizer.

use crate::error::{Error, Result};

const MAX_ITER: usize = 200;

/// Brent's method on a bracket `[a, b]` with `f(a)` and `f(b)` of opposite
/// sign (or zero). Converges to `rel_tol * |x|` plus a few ulps.
pub fn brent<F>(mut f: F, a: f64, b: f64, fa: f64, fb: f64, rel_tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::BracketNotFound { what: "bracket endpoints", lo: a.min(b), hi: a.max(b) });
    }

    let (mut a, mut b, mut fa, mut fb) = (a, b, fa, fb);
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;

    for _ in 0..MAX_ITER {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * rel_tol * b.abs() + f64::MIN_POSITIVE;
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < 3.0 * m * q - (tol * q).abs() && p < (0.5 * e * q).abs() {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b)?;
    }
    Err(Error::RootIterationLimit { last: b })
}

/// Golden-section search for a maximum of a unimodal `f` on `[lo, hi]`,
/// shrinking until the bracket is below `rel_tol` relative width.
/// Returns the narrowed bracket.
pub fn golden_section_max<F>(mut f: F, lo: f64, hi: f64, rel_tol: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - ratio * (b - a);
    let mut x2 = a + ratio * (b - a);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    for _ in 0..MAX_ITER {
        if (b - a) <= rel_tol * b.abs().max(a.abs()) {
            break;
        }
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + ratio * (b - a);
            f2 = f(x2)?;
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - ratio * (b - a);
            f1 = f(x1)?;
        }
    }
    Ok((a, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brent_finds_sqrt2() {
        let f = |x: f64| Ok(x * x - 2.0);
        let r = brent(f, 0.0, 2.0, -2.0, 2.0, 1e-15).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn brent_handles_tiny_roots() {
        let target: f64 = 3.0e-11;
        let f = |x: f64| Ok(x.sqrt() - target.sqrt());
        let r = brent(f, 1e-14, 1.0, f(1e-14).unwrap(), f(1.0).unwrap(), 1e-14).unwrap();
        assert!(((r - target) / target).abs() < 1e-12);
    }

    #[test]
    fn brent_rejects_non_bracket() {
        let r = brent(|x| Ok(x * x + 1.0), -1.0, 1.0, 2.0, 2.0, 1e-12);
        assert!(matches!(r, Err(Error::BracketNotFound { .. })));
    }

    #[test]
    fn golden_section_narrows_on_max() {
        let (a, b) = golden_section_max(|x| Ok(-(x - 1.3).powi(2)), 0.0, 4.0, 1e-8).unwrap();
        assert!(a <= 1.3 && 1.3 <= b);
        assert!(b - a < 1e-7);
    }
}
