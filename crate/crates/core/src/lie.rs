//! Integration of first-order systems by the truncated exponential of the
//! vector field: local Taylor expansion of the flow, a term-ratio
//! divergence guard, and re-expansion on a fixed step grid.

use crate::error::{Error, Result};
use crate::field::{eval_series, FnField, VectorField};
use crate::numeric::mat::vecops;
use crate::numeric::Tolerances;
use crate::poisson::{PhaseFunction, PoissonStructure};
use crate::traj::Trajectory;

/// A truncated local solution z(t) ≈ Σ terms\[n\] tⁿ around an expansion
/// point, with a crude convergence-radius estimate from the last term
/// ratio.
#[derive(Debug, Clone)]
pub struct LieSeriesSolution {
    pub order: usize,
    pub terms: Vec<Vec<f64>>,
    pub expansion_point: Vec<f64>,
    pub radius_estimate: f64,
}

/// Expand the flow of a field at z through the given order.
pub fn lie_expand(field: &dyn VectorField, z: &[f64], order: usize) -> Result<LieSeriesSolution> {
    if order < 1 {
        return Err(Error::Invalid("series order must be at least 1".into()));
    }
    let terms = field.flow_series(z, order)?;
    if terms.iter().any(|t| t.iter().any(|v| !v.is_finite())) {
        return Err(Error::SeriesDiverged {
            step: 0.0,
            ratio: f64::INFINITY,
        });
    }
    let last = vecops::norm2(&terms[order]);
    let prev = vecops::norm2(&terms[order - 1]);
    let radius_estimate = if last < 1e-300 {
        f64::INFINITY
    } else {
        prev / last
    };
    Ok(LieSeriesSolution {
        order,
        terms,
        expansion_point: z.to_vec(),
        radius_estimate,
    })
}

fn guard_step(sol: &LieSeriesSolution, step: f64, scale: f64) -> Result<()> {
    let n = sol.order;
    let tail = vecops::norm2(&sol.terms[n]) * step.powi(n as i32);
    if tail < 1e-14 * (1.0 + scale) {
        return Ok(());
    }
    let mut prev = vecops::norm2(&sol.terms[n - 1]) * step.powi(n as i32 - 1);
    if n >= 2 {
        prev = prev.max(vecops::norm2(&sol.terms[n - 2]) * step.powi(n as i32 - 2));
    }
    let ratio = tail / prev.max(1e-300);
    if ratio >= 0.5 {
        return Err(Error::SeriesDiverged { step, ratio });
    }
    Ok(())
}

/// Piecewise Lie-series solution: expand at the current state, advance by
/// `step`, re-expand. Requested sample times are evaluated from the local
/// polynomial of the segment that covers them.
pub fn lie_solve(
    field: &dyn VectorField,
    z0: &[f64],
    t_end: f64,
    order: usize,
    step: f64,
    sample_times: &[f64],
) -> Result<Trajectory> {
    if order < 2 {
        return Err(Error::Invalid("lie_solve needs order >= 2".into()));
    }
    if step <= 0.0 || t_end < 0.0 {
        return Err(Error::Invalid("step and t_end must be positive".into()));
    }
    let labels = (0..field.dim()).map(|i| format!("z{}", i + 1)).collect();
    let mut traj = Trajectory::new(labels, Vec::new());
    let mut samples: Vec<f64> = sample_times.to_vec();
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    samples.dedup();
    let mut sample_idx = 0;
    let mut t = 0.0;
    let mut z = z0.to_vec();
    while sample_idx < samples.len() && samples[sample_idx] <= t + 1e-15 {
        traj.push(samples[sample_idx], z.clone(), Vec::new());
        sample_idx += 1;
    }
    let scale = 1.0 + vecops::norm2(z0);
    while t < t_end - 1e-15 {
        let s = step.min(t_end - t);
        let sol = lie_expand(field, &z, order)?;
        guard_step(&sol, s, scale)?;
        while sample_idx < samples.len() && samples[sample_idx] <= t + s + 1e-12 {
            let local = samples[sample_idx] - t;
            traj.push(samples[sample_idx], eval_series(&sol.terms, local), Vec::new());
            sample_idx += 1;
        }
        z = eval_series(&sol.terms, s);
        t += s;
    }
    Ok(traj)
}

/// Taylor coefficients of one coordinate of the flow: ((h·∂)^n z_i)/n!.
/// Exact whenever the field supplies an exact series recurrence.
pub fn lie_apply_coordinate(
    field: &dyn VectorField,
    coordinate: usize,
    z: &[f64],
    order: usize,
) -> Result<Vec<f64>> {
    let terms = field.flow_series(z, order)?;
    Ok(terms.iter().map(|c| c[coordinate]).collect())
}

fn scalar_tower(
    field: &dyn VectorField,
    f: &dyn Fn(&[f64]) -> f64,
    y: &[f64],
    n: usize,
) -> Result<f64> {
    if n == 0 {
        return Ok(f(y));
    }
    let h = field.eval(y)?;
    let hnorm = vecops::norm2(&h);
    if hnorm < 1e-300 {
        return Ok(0.0);
    }
    let u = vecops::scaled(&h, 1.0 / hnorm);
    let scale = 1.0 + vecops::norm2(y);
    let delta = f64::EPSILON.powf(1.0 / (n as f64 + 2.0)) * scale;
    let fp = scalar_tower(field, f, &vecops::axpy(delta, &u, y), n - 1)?;
    let fm = scalar_tower(field, f, &vecops::axpy(-delta, &u, y), n - 1)?;
    Ok((fp - fm) * hnorm / (2.0 * delta))
}

/// The sequence ((h·∂)^n f)(z)/n! for a scalar observable by nested
/// central differences; noise-limited around order 6.
pub fn lie_apply(
    field: &dyn VectorField,
    f: &dyn Fn(&[f64]) -> f64,
    z: &[f64],
    order: usize,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(order + 1);
    let mut factorial = 1.0;
    for n in 0..=order {
        if n > 0 {
            factorial *= n as f64;
        }
        let v = scalar_tower(field, f, z, n)?;
        if !v.is_finite() {
            return Err(Error::SeriesDiverged {
                step: 0.0,
                ratio: f64::INFINITY,
            });
        }
        out.push(v / factorial);
    }
    Ok(out)
}

/// Build the Hamiltonian vector field ω(z)∇h(z) of a Poisson structure and
/// integrate it by the Lie series. The flow series of the generic field is
/// produced by nested finite differences; systems with polynomial bracket
/// flows should integrate their exact quadratic fields instead.
#[allow(clippy::too_many_arguments)]
pub fn lie_solve_hamiltonian(
    ps: &PoissonStructure,
    h: PhaseFunction,
    z0: &[f64],
    t_end: f64,
    order: usize,
    step: f64,
    sample_times: &[f64],
    tol: &Tolerances,
) -> Result<Trajectory> {
    let field: FnField = ps.hamiltonian_field(h, *tol, "lie-hamiltonian");
    lie_solve(&field, z0, t_end, order, step, sample_times)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::QuadraticField;
    use crate::numeric::Mat;

    #[test]
    fn constant_field_shifts_the_coordinate() {
        // zdot = 1: coefficients (z, 1, 0, 0, ...).
        let f = QuadraticField::constant_only(vec![1.0], "shift");
        let c = lie_apply_coordinate(&f, 0, &[0.7], 6).unwrap();
        assert_eq!(c[0], 0.7);
        assert_eq!(c[1], 1.0);
        for v in &c[2..] {
            assert_eq!(*v, 0.0);
        }
    }

    #[test]
    fn linear_field_coefficients_are_exponential() {
        let f = QuadraticField::linear_only(Mat::identity(1), "exp");
        let z = 1.3;
        let c = lie_apply_coordinate(&f, 0, &[z], 12).unwrap();
        let mut fact = 1.0;
        let mut partial = 0.0;
        for (n, v) in c.iter().enumerate() {
            if n > 0 {
                fact *= n as f64;
            }
            assert!((v - z / fact).abs() < 1e-13);
            partial += v * 0.5f64.powi(n as i32);
        }
        assert!((partial - z * 0.5f64.exp()).abs() < 1e-10);
    }

    #[test]
    fn constant_observable_has_terminating_series() {
        let f = FnField::new(2, "rotation", |z| Ok(vec![z[1], -z[0]]));
        let c = lie_apply(&f, &|_z: &[f64]| 4.25, &[0.3, 0.4], 4).unwrap();
        assert_eq!(c[0], 4.25);
        for v in &c[1..] {
            assert_eq!(*v, 0.0);
        }
    }

    #[test]
    fn nested_fd_observable_matches_exact_low_order() {
        // f = z along zdot = z: coefficients z/n! through order 4.
        let f = FnField::new(1, "exp", |z| Ok(vec![z[0]]));
        let c = lie_apply(&f, &|z: &[f64]| z[0], &[1.0], 4).unwrap();
        let expect = [1.0, 1.0, 0.5, 1.0 / 6.0, 1.0 / 24.0];
        for (got, want) in c.iter().zip(expect) {
            assert!((got - want).abs() < 1e-4, "{got} vs {want}");
        }
    }

    #[test]
    fn decay_solved_to_high_accuracy() {
        let f = QuadraticField::linear_only(Mat::diag(&[-1.0]), "decay");
        let traj = lie_solve(&f, &[1.0], 1.0, 15, 0.25, &[1.0]).unwrap();
        let end = traj.last_state().unwrap()[0];
        assert!((end - (-1.0f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn harmonic_oscillator_returns_after_a_period() {
        let b = Mat::from_rows(&[vec![0.0, 1.0], vec![-1.0, 0.0]]);
        let f = QuadraticField::linear_only(b, "harmonic");
        let period = 2.0 * std::f64::consts::PI;
        let traj = lie_solve(&f, &[1.0, 0.0], period, 14, 0.3, &[period]).unwrap();
        let end = traj.last_state().unwrap();
        assert!((end[0] - 1.0).abs() < 1e-8);
        assert!(end[1].abs() < 1e-8);
    }

    #[test]
    fn zero_field_is_constant() {
        let f = QuadraticField::constant_only(vec![0.0, 0.0], "zero");
        let traj = lie_solve(&f, &[2.0, -3.0], 1.0, 5, 0.2, &[0.0, 0.5, 1.0]).unwrap();
        for s in &traj.samples {
            assert_eq!(s.state, vec![2.0, -3.0]);
        }
    }

    #[test]
    fn semigroup_property_of_the_stepped_solution() {
        let b = Mat::from_rows(&[vec![0.0, 1.0], vec![-1.0, 0.0]]);
        let f = QuadraticField::linear_only(b, "harmonic");
        let z0 = [0.8, -0.3];
        let first = lie_solve(&f, &z0, 0.7, 10, 0.1, &[0.7]).unwrap();
        let mid = first.last_state().unwrap().to_vec();
        let second = lie_solve(&f, &mid, 0.5, 10, 0.1, &[0.5]).unwrap();
        let direct = lie_solve(&f, &z0, 1.2, 10, 0.1, &[1.2]).unwrap();
        let a = second.last_state().unwrap();
        let b2 = direct.last_state().unwrap();
        assert!(vecops::max_abs_diff(a, b2) < 1e-11);
    }

    #[test]
    fn divergence_guard_trips_past_the_radius() {
        // zdot = z² from z = 1 blows up at t = 1; a 2.0 step must refuse.
        let quad = vec![Mat::from_rows(&[vec![1.0]])];
        let f = QuadraticField::new(vec![0.0], Mat::zeros(1, 1), quad, "blowup");
        let err = lie_solve(&f, &[1.0], 2.0, 10, 2.0, &[2.0]);
        assert!(matches!(err, Err(Error::SeriesDiverged { .. })));
    }

    #[test]
    fn radius_estimate_reflects_the_pole() {
        // z(t) = 1/(1−t): all Taylor coefficients are 1, radius 1.
        let quad = vec![Mat::from_rows(&[vec![1.0]])];
        let f = QuadraticField::new(vec![0.0], Mat::zeros(1, 1), quad, "blowup");
        let sol = lie_expand(&f, &[1.0], 12).unwrap();
        assert!((sol.radius_estimate - 1.0).abs() < 1e-12);
        assert_eq!(sol.terms[0], vec![1.0]);
        assert_eq!(sol.terms[1], vec![1.0]);
    }

    #[test]
    fn free_particle_hamiltonian_flow_is_exact_at_low_order() {
        let ps = PoissonStructure::canonical(1);
        let h = PhaseFunction::new(|z: &[f64]| z[1] * z[1] / 2.0);
        let tol = Tolerances::default();
        let traj = lie_solve_hamiltonian(&ps, h, &[0.2, 1.5], 1.0, 2, 0.5, &[1.0], &tol).unwrap();
        let end = traj.last_state().unwrap();
        assert!((end[0] - (0.2 + 1.5)).abs() < 1e-9);
        assert!((end[1] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn generic_hamiltonian_path_handles_the_oscillator_at_modest_order() {
        let ps = PoissonStructure::canonical(1);
        let h = PhaseFunction::new(|z: &[f64]| 0.5 * (z[0] * z[0] + z[1] * z[1]));
        let tol = Tolerances::default();
        let traj =
            lie_solve_hamiltonian(&ps, h, &[1.0, 0.0], 1.0, 5, 0.05, &[1.0], &tol).unwrap();
        let end = traj.last_state().unwrap();
        assert!((end[0] - 1.0f64.cos()).abs() < 1e-5, "{end:?}");
        assert!((end[1] + 1.0f64.sin()).abs() < 1e-5);
    }

    #[test]
    fn local_polynomial_derivative_matches_the_field() {
        // Residual of the truncated series against the field at mid-step.
        let b = Mat::from_rows(&[vec![0.0, 1.0], vec![-1.0, 0.0]]);
        let f = QuadraticField::linear_only(b, "harmonic");
        let sol = lie_expand(&f, &[1.0, 0.0], 8).unwrap();
        let s = 0.1;
        let z = eval_series(&sol.terms, s);
        let mut dz = vec![0.0; 2];
        for (n, term) in sol.terms.iter().enumerate().skip(1) {
            for i in 0..2 {
                dz[i] += n as f64 * term[i] * s.powi(n as i32 - 1);
            }
        }
        let hz = f.eval(&z).unwrap();
        assert!(vecops::max_abs_diff(&dz, &hz) < 1e-12);
    }

    // Exact polynomial arithmetic used as the independent route in the
    // observable-series identity below.
    #[derive(Clone, Debug)]
    struct Poly(Vec<f64>);

    impl Poly {
        fn eval(&self, x: f64) -> f64 {
            self.0.iter().rev().fold(0.0, |acc, c| acc * x + c)
        }
        fn derivative(&self) -> Poly {
            Poly(
                self.0
                    .iter()
                    .enumerate()
                    .skip(1)
                    .map(|(n, c)| n as f64 * c)
                    .collect(),
            )
        }
        fn mul(&self, other: &Poly) -> Poly {
            let mut out = vec![0.0; self.0.len() + other.0.len() - 1];
            for (i, a) in self.0.iter().enumerate() {
                for (j, b) in other.0.iter().enumerate() {
                    out[i + j] += a * b;
                }
            }
            Poly(out)
        }
    }

    #[test]
    fn series_of_observable_equals_observable_of_series() {
        // h(z) = z², f(z) = z³ − 2z on the scalar domain. Left: exact
        // symbolic iteration of (h ∂)ⁿ f. Right: flow series composed into
        // f by Cauchy products. Compared order by order through 8.
        let h = Poly(vec![0.0, 0.0, 1.0]);
        let f0 = Poly(vec![0.0, -2.0, 0.0, 1.0]);
        let z0 = 0.8;
        let order = 8;
        let mut left = Vec::with_capacity(order + 1);
        let mut cur = f0.clone();
        let mut fact = 1.0;
        for n in 0..=order {
            if n > 0 {
                fact *= n as f64;
                cur = h.mul(&cur.derivative());
            }
            left.push(cur.eval(z0) / fact);
        }
        let quad = vec![Mat::from_rows(&[vec![1.0]])];
        let field = QuadraticField::new(vec![0.0], Mat::zeros(1, 1), quad, "sq");
        let flow = field.flow_series(&[z0], order).unwrap();
        let flow_coeffs: Vec<f64> = flow.iter().map(|c| c[0]).collect();
        let truncate_mul = |a: &[f64], b: &[f64]| -> Vec<f64> {
            let mut out = vec![0.0; order + 1];
            for i in 0..=order {
                for j in 0..=(order - i) {
                    out[i + j] += a[i] * b[j];
                }
            }
            out
        };
        let w = flow_coeffs;
        let w2 = truncate_mul(&w, &w);
        let w3 = truncate_mul(&w2, &w);
        for n in 0..=order {
            let right = w3[n] - 2.0 * w[n];
            assert!(
                (left[n] - right).abs() < 1e-12 * (1.0 + left[n].abs()),
                "order {n}: {} vs {right}",
                left[n]
            );
        }
    }
}
