//! Damped Newton iteration for small dense systems.

use super::mat::{vecops, Mat};
use super::Tolerances;
use crate::error::{Error, Result};

/// Solve residual(x) = 0 with user-supplied Jacobian, damping the step by
/// halving (up to 20 times) whenever the residual norm fails to decrease.
pub fn newton_solve(
    residual: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
    jacobian: &dyn Fn(&[f64]) -> Result<Mat>,
    x0: &[f64],
    tol: &Tolerances,
) -> Result<Vec<f64>> {
    let mut x = x0.to_vec();
    let mut r = residual(&x)?;
    if r.len() != x.len() {
        return Err(Error::Dimension(format!(
            "residual returns {} components for {} unknowns",
            r.len(),
            x.len()
        )));
    }
    let mut rnorm = vecops::norm_inf(&r);
    for _ in 0..tol.newton_max_iter {
        if rnorm <= tol.newton_tol {
            return Ok(x);
        }
        let jac = jacobian(&x)?;
        let mut delta = jac.solve(&r)?;
        for d in &mut delta {
            *d = -*d;
        }
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..20 {
            let trial = vecops::axpy(lambda, &delta, &x);
            let rt = residual(&trial)?;
            let rt_norm = vecops::norm_inf(&rt);
            if rt_norm < rnorm || rt_norm <= tol.newton_tol {
                x = trial;
                r = rt;
                rnorm = rt_norm;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(Error::NewtonDiverged {
                iterations: tol.newton_max_iter,
                residual: rnorm,
            });
        }
    }
    if rnorm <= tol.newton_tol {
        Ok(x)
    } else {
        Err(Error::NewtonDiverged {
            iterations: tol.newton_max_iter,
            residual: rnorm,
        })
    }
}
