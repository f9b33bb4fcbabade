//! Embedded Dormand-Prince 4(5) pair with PI step-size control.
//!
//! This is the reference oracle used by every cross-check in the library.

use super::Tolerances;
use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::traj::Trajectory;

// Dormand-Prince coefficients (FSAL form).
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

struct Stepper<'a> {
    f: &'a dyn VectorField,
    tol: f64,
    err_prev: f64,
}

impl<'a> Stepper<'a> {
    fn attempt(&self, t: f64, y: &[f64], h: f64, k0: &[f64]) -> Result<(Vec<f64>, Vec<f64>, f64)> {
        let n = y.len();
        let mut k: Vec<Vec<f64>> = Vec::with_capacity(7);
        k.push(k0.to_vec());
        for s in 1..7 {
            let mut ys = y.to_vec();
            for (j, kj) in k.iter().enumerate() {
                let a = A[s][j];
                if a != 0.0 {
                    for i in 0..n {
                        ys[i] += h * a * kj[i];
                    }
                }
            }
            let _ = t + C[s] * h; // autonomous fields; kept for clarity
            k.push(self.f.eval(&ys)?);
        }
        let mut y5 = y.to_vec();
        let mut e = vec![0.0; n];
        for (s, ks) in k.iter().enumerate() {
            for i in 0..n {
                y5[i] += h * B5[s] * ks[i];
                e[i] += h * (B5[s] - B4[s]) * ks[i];
            }
        }
        let mut err = 0.0;
        for i in 0..n {
            let sc = self.tol + self.tol * y[i].abs().max(y5[i].abs());
            err += (e[i] / sc) * (e[i] / sc);
        }
        err = (err / n as f64).sqrt();
        // FSAL: stage 7 equals f at the accepted point.
        Ok((y5, k[6].clone(), err))
    }

    fn factor(&self, err: f64) -> f64 {
        const SAFETY: f64 = 0.9;
        let alpha = 0.7 / 5.0;
        let beta = 0.4 / 5.0;
        let e = err.max(1e-16);
        (SAFETY * e.powf(-alpha) * self.err_prev.powf(beta)).clamp(0.2, 5.0)
    }
}

/// Integrate from t0 to t1 and return the endpoint state.
pub fn rk_endpoint(
    f: &dyn VectorField,
    z0: &[f64],
    t0: f64,
    t1: f64,
    tol: &Tolerances,
) -> Result<Vec<f64>> {
    let mut cb = |_t: f64, _y: &[f64]| {};
    rk_drive(f, z0, t0, t1, tol, &mut cb)
}

/// Integrate and invoke a callback at every accepted step (including both ends).
pub fn rk_drive(
    f: &dyn VectorField,
    z0: &[f64],
    t0: f64,
    t1: f64,
    tol: &Tolerances,
    on_step: &mut dyn FnMut(f64, &[f64]),
) -> Result<Vec<f64>> {
    if t1 == t0 {
        on_step(t0, z0);
        return Ok(z0.to_vec());
    }
    let span = t1 - t0;
    let dir = span.signum();
    let mut t = t0;
    let mut y = z0.to_vec();
    let mut k0 = f.eval(&y)?;
    let fn_scale = 1.0 + k0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut h = (0.01 * span.abs() / fn_scale).min(span.abs()).max(1e-8) * dir;
    let mut stepper = Stepper {
        f,
        tol: tol.quad_tol,
        err_prev: 1.0,
    };
    on_step(t, &y);
    let mut rejected_in_a_row = 0usize;
    while (t1 - t) * dir > 0.0 {
        if (t + h - t1) * dir > 0.0 {
            h = t1 - t;
        }
        if h.abs() < 1e-14 * (1.0 + t.abs()) {
            return Err(Error::StepUnderflow { t });
        }
        let (y5, k_last, err) = stepper.attempt(t, &y, h, &k0)?;
        if err <= 1.0 {
            t += h;
            y = y5;
            k0 = k_last;
            stepper.err_prev = err.max(1e-4);
            on_step(t, &y);
            h *= stepper.factor(err);
            rejected_in_a_row = 0;
        } else {
            h *= stepper.factor(err).min(1.0);
            rejected_in_a_row += 1;
            if rejected_in_a_row > 200 {
                return Err(Error::StepUnderflow { t });
            }
        }
    }
    Ok(y)
}

/// Adaptive solution over a span, sampled at every accepted step.
pub fn rk_integrate(
    f: &dyn VectorField,
    z0: &[f64],
    t_span: (f64, f64),
    tol: &Tolerances,
) -> Result<Trajectory> {
    let labels = (0..f.dim()).map(|i| format!("z{}", i + 1)).collect();
    let mut traj = Trajectory::new(labels, Vec::new());
    let mut cb = |t: f64, y: &[f64]| traj.push(t, y.to_vec(), Vec::new());
    rk_drive(f, z0, t_span.0, t_span.1, tol, &mut cb)?;
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FnField;

    #[test]
    fn zero_field_is_constant() {
        let f = FnField::new(2, "zero", |_| Ok(vec![0.0, 0.0]));
        let traj = rk_integrate(&f, &[1.0, -2.0], (0.0, 1.0), &Tolerances::default()).unwrap();
        for s in &traj.samples {
            assert_eq!(s.state, vec![1.0, -2.0]);
        }
    }

    #[test]
    fn scalar_exponential() {
        let f = FnField::new(1, "exp", |z| Ok(vec![z[0]]));
        let tol = Tolerances {
            quad_tol: 1e-12,
            ..Default::default()
        };
        let end = rk_endpoint(&f, &[1.0], 0.0, 1.0, &tol).unwrap();
        assert!((end[0] - std::f64::consts::E).abs() < 1e-10);
    }

    #[test]
    fn harmonic_oscillator_full_period() {
        let f = FnField::new(2, "harmonic", |z| Ok(vec![z[1], -z[0]]));
        let tol = Tolerances {
            quad_tol: 1e-11,
            ..Default::default()
        };
        let end = rk_endpoint(&f, &[1.0, 0.0], 0.0, 2.0 * std::f64::consts::PI, &tol).unwrap();
        assert!((end[0] - 1.0).abs() < 1e-8);
        assert!(end[1].abs() < 1e-8);
    }

    #[test]
    fn hamiltonian_energy_drift_is_small() {
        // Pendulum-like nonlinear oscillator; energy must track local error control.
        let f = FnField::new(2, "pendulum", |z| Ok(vec![z[1], -z[0].sin()]));
        let energy = |z: &[f64]| 0.5 * z[1] * z[1] + (1.0 - z[0].cos());
        let tol = Tolerances {
            quad_tol: 1e-11,
            ..Default::default()
        };
        let z0 = [1.2, 0.0];
        let e0 = energy(&z0);
        let traj = rk_integrate(&f, &z0, (0.0, 10.0), &tol).unwrap();
        for s in &traj.samples {
            assert!((energy(&s.state) - e0).abs() < 1e-8);
        }
    }

    #[test]
    fn singular_rhs_underflows_step() {
        // Finite-time blow-up: zdot = z^2 from z=1 explodes at t=1.
        let f = FnField::new(1, "blowup", |z| Ok(vec![z[0] * z[0]]));
        let res = rk_endpoint(&f, &[1.0], 0.0, 2.0, &Tolerances::default());
        assert!(matches!(res, Err(Error::StepUnderflow { .. })));
    }
}
