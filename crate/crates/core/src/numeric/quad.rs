//! Adaptive Simpson quadrature with interval-refinement error control.

use super::Tolerances;
use crate::error::{Error, Result};

const MAX_DEPTH: usize = 60;

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
    let m = 0.5 * (a + b);
    let fm = f(m);
    ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
}

#[allow(clippy::too_many_arguments)]
fn refine(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    whole: f64,
    m: f64,
    fm: f64,
    eps: f64,
    depth: usize,
) -> Result<f64> {
    let (left, lm, flm) = simpson(f, a, fa, m, fm);
    let (right, rm, frm) = simpson(f, m, fm, b, fb);
    let delta = left + right - whole;
    if !delta.is_finite() {
        // A non-finite integrand cannot be refined away.
        return Err(Error::QuadratureLimit {
            a,
            b,
            estimate: f64::INFINITY,
        });
    }
    if delta.abs() <= 15.0 * eps {
        return Ok(left + right + delta / 15.0);
    }
    if depth >= MAX_DEPTH {
        return Err(Error::QuadratureLimit {
            a,
            b,
            estimate: delta.abs() / 15.0,
        });
    }
    let l = refine(f, a, fa, m, fm, left, lm, flm, 0.5 * eps, depth + 1)?;
    let r = refine(f, m, fm, b, fb, right, rm, frm, 0.5 * eps, depth + 1)?;
    Ok(l + r)
}

/// Integrate a continuous g over [a, b] to within quad_tol.
pub fn adaptive_quadrature(
    g: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    tol: &Tolerances,
) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let fa = g(lo);
    let fb = g(hi);
    let (whole, m, fm) = simpson(g, lo, fa, hi, fb);
    let v = refine(g, lo, fa, hi, fb, whole, m, fm, tol.quad_tol, 0)?;
    Ok(sign * v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_and_linear() {
        let tol = Tolerances::default();
        assert!((adaptive_quadrature(&|_| 1.0, 0.0, 1.0, &tol).unwrap() - 1.0).abs() < 1e-14);
        assert!((adaptive_quadrature(&|x| x, 0.0, 1.0, &tol).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn sine_over_half_period() {
        let tol = Tolerances::default();
        let v = adaptive_quadrature(&|x| x.sin(), 0.0, std::f64::consts::PI, &tol).unwrap();
        assert!((v - 2.0).abs() < 1e-10);
    }

    #[test]
    fn reversed_bounds_flip_sign() {
        let tol = Tolerances::default();
        let v = adaptive_quadrature(&|x| x, 1.0, 0.0, &tol).unwrap();
        assert!((v + 0.5).abs() < 1e-14);
    }

    #[test]
    fn integrable_singularity_within_reach() {
        // 1/sqrt(1-x) on [0, 1-1e-12] integrates to ~2.
        let tol = Tolerances::default();
        let v = adaptive_quadrature(&|x| 1.0 / (1.0 - x).sqrt(), 0.0, 1.0 - 1e-12, &tol).unwrap();
        assert!((v - 2.0).abs() < 1e-5);
    }
}
