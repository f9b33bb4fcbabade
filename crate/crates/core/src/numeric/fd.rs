//! Central finite differences with per-component step scaling.

use super::mat::Mat;
use super::Tolerances;
use crate::error::Result;

#[inline]
fn step_for(x: f64, base: f64) -> f64 {
    base * (1.0 + x.abs())
}

/// Central-difference Jacobian of a vector-valued map.
pub fn fd_jacobian(
    f: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
    x: &[f64],
    tol: &Tolerances,
) -> Result<Mat> {
    let n = x.len();
    let f0 = f(x)?;
    let m = f0.len();
    let mut jac = Mat::zeros(m, n);
    let mut xp = x.to_vec();
    for j in 0..n {
        let h = step_for(x[j], tol.fd_step);
        xp[j] = x[j] + h;
        let fp = f(&xp)?;
        xp[j] = x[j] - h;
        let fm = f(&xp)?;
        xp[j] = x[j];
        for i in 0..m {
            jac.set(i, j, (fp[i] - fm[i]) / (2.0 * h));
        }
    }
    Ok(jac)
}

/// Central-difference gradient of a scalar function.
pub fn fd_gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64], tol: &Tolerances) -> Vec<f64> {
    let mut grad = vec![0.0; x.len()];
    let mut xp = x.to_vec();
    for j in 0..x.len() {
        let h = step_for(x[j], tol.fd_step);
        xp[j] = x[j] + h;
        let fp = f(&xp);
        xp[j] = x[j] - h;
        let fm = f(&xp);
        xp[j] = x[j];
        grad[j] = (fp - fm) / (2.0 * h);
    }
    grad
}

/// Central-difference partial derivative of a matrix-valued field.
pub fn fd_matrix_partial(
    f: &dyn Fn(&[f64]) -> Result<Mat>,
    x: &[f64],
    j: usize,
    tol: &Tolerances,
) -> Result<Mat> {
    let h = step_for(x[j], tol.fd_step);
    let mut xp = x.to_vec();
    xp[j] = x[j] + h;
    let fp = f(&xp)?;
    xp[j] = x[j] - h;
    let fm = f(&xp)?;
    Ok(fp.sub(&fm).scaled(1.0 / (2.0 * h)))
}
