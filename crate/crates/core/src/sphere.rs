//! Built-in free particle on the sphere |x|² = c²: the exact momenta maps
//! in the x₃ chart, the five-dimensional bracket structure, and the closed
//! reduced Hamiltonian, all doubling as regression anchors for the generic
//! reduction pipeline.

use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::ConstraintSpec;
use crate::lagrangian::{ConstrainedSystem, FullPhaseState};
use crate::numeric::mat::vecops;
use crate::numeric::Mat;
use crate::poisson::{PhaseFunction, PoissonStructure, StructureKind};

/// Mass and radius of the spherical surface the particle is confined to.
#[derive(Debug, Clone, Copy)]
pub struct SphereSystem {
    pub mass: f64,
    pub radius: f64,
}

impl SphereSystem {
    pub fn new(mass: f64, radius: f64) -> Result<Self> {
        if mass <= 0.0 || radius <= 0.0 {
            return Err(Error::Invalid("mass and radius must be positive".into()));
        }
        Ok(SphereSystem { mass, radius })
    }

    /// The sphere as a generic constrained system (all derivatives closed
    /// form): G = x² − c², M = m·1, U = 0.
    pub fn constrained_system(&self) -> Arc<ConstrainedSystem> {
        let c2 = self.radius * self.radius;
        let spec = ConstraintSpec::new(3, 1, move |x: &[f64]| {
            vec![x.iter().map(|v| v * v).sum::<f64>() - c2]
        })
        .with_jacobian(|x: &[f64]| Mat::from_rows(&[x.iter().map(|v| 2.0 * v).collect()]))
        .with_hessians(|_x: &[f64]| vec![Mat::identity(3).scaled(2.0)]);
        let m = self.mass;
        Arc::new(
            ConstrainedSystem::new(
                vec!["x1".into(), "x2".into(), "x3".into()],
                move |_q: &[f64]| Mat::identity(3).scaled(m),
                |_q: &[f64]| 0.0,
                spec,
            )
            .expect("sphere dimensions are valid")
            .with_mass_partials(|_q, _e| Mat::zeros(3, 3))
            .with_potential_gradient(|_q| vec![0.0; 3]),
        )
    }

    fn require_chart(x: &[f64]) -> Result<()> {
        let scale = vecops::norm2(x);
        if x[2].abs() <= 1e-12 * (1.0 + scale) {
            return Err(Error::Chart {
                q: x.to_vec(),
                reason: "x3 = 0 lies outside the x3 chart".into(),
            });
        }
        Ok(())
    }

    /// Momenta adapted to the constraint surface in the x₃ chart:
    /// π₁ = p₁ − (x₁/x₃)p₃, π₂ = p₂ − (x₂/x₃)p₃, π₃ = (x, p).
    pub fn forward(&self, state: &FullPhaseState) -> Result<(Vec<f64>, Vec<f64>)> {
        let (x, p) = (&state.q, &state.p);
        Self::require_chart(x)?;
        let pi = vec![
            p[0] - x[0] / x[2] * p[2],
            p[1] - x[1] / x[2] * p[2],
            vecops::dot(x, p),
        ];
        Ok((x.clone(), pi))
    }

    /// Inverse of `forward`.
    pub fn backward(&self, x: &[f64], pi: &[f64]) -> Vec<f64> {
        let x2 = vecops::dot(x, x);
        let bracket = x[0] * pi[0] + x[1] * pi[1] - pi[2];
        vec![
            pi[0] - x[0] / x2 * bracket,
            pi[1] - x[1] / x2 * bracket,
            -x[2] / x2 * bracket,
        ]
    }

    /// Energy on the intermediate submanifold (π₃ = 0 substituted):
    /// H = (π₁² + π₂² − (x₁π₁ + x₂π₂)²/x²) / 2m.
    ///
    /// The squared cross term is what direct substitution of the inverse
    /// momenta map into p²/2m produces; the generic reduction path is the
    /// arbiter and the two agree to machine precision in the tests.
    pub fn reduced_hamiltonian(&self, x: &[f64], pi12: &[f64]) -> f64 {
        let x2 = vecops::dot(x, x);
        let cross = x[0] * pi12[0] + x[1] * pi12[1];
        (pi12[0] * pi12[0] + pi12[1] * pi12[1] - cross * cross / x2) / (2.0 * self.mass)
    }

    /// The 5-dimensional bracket tensor over (x₁, x₂, x₃, π₁, π₂):
    /// {x₁, π₁} = {x₂, π₂} = 1, {x₃, π_i} = −x_i/x₃, everything else zero.
    pub fn structure(&self) -> PoissonStructure {
        let labels = vec![
            "x1".into(),
            "x2".into(),
            "x3".into(),
            "pi1".into(),
            "pi2".into(),
        ];
        PoissonStructure::new(labels, StructureKind::Intermediate, |z: &[f64]| {
            SphereSystem::require_chart(&z[..3])?;
            let mut omega = Mat::zeros(5, 5);
            omega.set(0, 3, 1.0);
            omega.set(3, 0, -1.0);
            omega.set(1, 4, 1.0);
            omega.set(4, 1, -1.0);
            omega.set(2, 3, -z[0] / z[2]);
            omega.set(3, 2, z[0] / z[2]);
            omega.set(2, 4, -z[1] / z[2]);
            omega.set(4, 2, z[1] / z[2]);
            Ok(omega)
        })
    }

    /// The Casimir |x|² of the 5-dimensional structure.
    pub fn casimir(&self) -> PhaseFunction {
        PhaseFunction::with_gradient(
            |z: &[f64]| z[..3].iter().map(|v| v * v).sum(),
            |z: &[f64]| {
                let mut g = vec![0.0; 5];
                for i in 0..3 {
                    g[i] = 2.0 * z[i];
                }
                g
            },
        )
    }

    /// The reduced Hamiltonian as a phase function over (x, π₁, π₂).
    pub fn hamiltonian_function(&self) -> PhaseFunction {
        let sys = *self;
        PhaseFunction::new(move |z: &[f64]| sys.reduced_hamiltonian(&z[..3], &z[3..5]))
    }

    /// Random point on the sphere with tangent momentum.
    pub fn random_on_shell(&self, rng: &mut impl Rng) -> FullPhaseState {
        let x = self.random_position(rng, 0.0);
        let p = self.tangent_momentum(&x, rng);
        FullPhaseState::new(x, p)
    }

    /// Same, but keeping |x₃| ≥ min_x3_fraction·c so the x₃ chart stays
    /// well conditioned.
    pub fn random_on_shell_in_chart(
        &self,
        rng: &mut impl Rng,
        min_x3_fraction: f64,
    ) -> FullPhaseState {
        let x = self.random_position(rng, min_x3_fraction);
        let p = self.tangent_momentum(&x, rng);
        FullPhaseState::new(x, p)
    }

    fn random_position(&self, rng: &mut impl Rng, min_x3_fraction: f64) -> Vec<f64> {
        loop {
            let v: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let n = vecops::norm2(&v);
            if n < 1e-3 {
                continue;
            }
            let x = vecops::scaled(&v, self.radius / n);
            if x[2].abs() >= min_x3_fraction * self.radius {
                return x;
            }
        }
    }

    fn tangent_momentum(&self, x: &[f64], rng: &mut impl Rng) -> Vec<f64> {
        let p_raw: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let coef = vecops::dot(&p_raw, x) / vecops::dot(x, x);
        p_raw.iter().zip(x).map(|(p, xi)| p - coef * xi).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::Tolerances;
    use crate::poisson::casimir_drift;
    use crate::reduction::{reduce_intermediate, reduced_flow, ReducedPhaseState};
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    #[test]
    fn forward_at_the_pole_is_the_identity_on_tangent_momenta() {
        let sys = SphereSystem::new(1.0, 1.0).unwrap();
        let (_, pi) = sys
            .forward(&FullPhaseState::new(vec![0.0, 0.0, 1.0], vec![0.4, -0.7, 0.0]))
            .unwrap();
        assert_eq!(pi, vec![0.4, -0.7, 0.0]);
    }

    #[test]
    fn forward_backward_roundtrip() {
        let sys = SphereSystem::new(1.3, 2.0).unwrap();
        let mut rng = StdRng::seed_from_u64(21);
        for _ in 0..50 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            if x[2].abs() < 0.1 {
                continue;
            }
            let p: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let (_, pi) = sys.forward(&FullPhaseState::new(x.clone(), p.clone())).unwrap();
            let back = sys.backward(&x, &pi);
            assert!(vecops::max_abs_diff(&back, &p) < 1e-12);
        }
    }

    #[test]
    fn radial_momentum_has_no_tangent_part() {
        let sys = SphereSystem::new(1.0, 1.0).unwrap();
        let x = vec![0.3, -0.4, 0.87];
        let s = 1.7;
        let p = vecops::scaled(&x, s);
        let (_, pi) = sys.forward(&FullPhaseState::new(x.clone(), p.clone())).unwrap();
        assert!(pi[0].abs() < 1e-14);
        assert!(pi[1].abs() < 1e-14);
        let expect = vecops::norm2(&x) * vecops::norm2(&p);
        assert!((pi[2] - expect).abs() < 1e-12);
    }

    #[test]
    fn chart_boundary_is_an_error() {
        let sys = SphereSystem::new(1.0, 1.0).unwrap();
        assert!(matches!(
            sys.forward(&FullPhaseState::new(vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0])),
            Err(Error::Chart { .. })
        ));
    }

    #[test]
    fn reduced_hamiltonian_special_points() {
        let sys = SphereSystem::new(2.0, 1.5).unwrap();
        // Pole: cross term dies, H = (a² + b²)/2m.
        let h = sys.reduced_hamiltonian(&[0.0, 0.0, 1.5], &[0.3, -0.8]);
        assert!((h - (0.09 + 0.64) / 4.0).abs() < 1e-14);
        // Zero momenta.
        assert_eq!(sys.reduced_hamiltonian(&[0.0, 0.0, 1.5], &[0.0, 0.0]), 0.0);
        // Equator point (c, 0, 0) with π = (0, b): H = b²/2m.
        let h = sys.reduced_hamiltonian(&[1.5, 0.0, 0.0], &[0.0, 0.7]);
        assert!((h - 0.49 / 4.0).abs() < 1e-14);
    }

    #[test]
    fn reduced_hamiltonian_equals_substitution_into_kinetic_energy() {
        // The closed form must equal |backward(x, (π1, π2, 0))|²/2m.
        let sys = SphereSystem::new(1.7, 1.2).unwrap();
        let mut rng = StdRng::seed_from_u64(22);
        for _ in 0..50 {
            let full = sys.random_on_shell_in_chart(&mut rng, 0.3);
            let (x, pi) = sys.forward(&full).unwrap();
            let p = sys.backward(&x, &[pi[0], pi[1], 0.0]);
            let direct = vecops::dot(&p, &p) / (2.0 * sys.mass);
            let closed = sys.reduced_hamiltonian(&x, &pi[..2]);
            assert!((direct - closed).abs() < 1e-13);
        }
    }

    #[test]
    fn structure_matches_the_four_listed_brackets() {
        let sys = SphereSystem::new(1.0, 2.0).unwrap();
        let ps = sys.structure();
        let tol = Tolerances::default();
        let mut rng = StdRng::seed_from_u64(23);
        for _ in 0..20 {
            let full = sys.random_on_shell_in_chart(&mut rng, 0.3);
            let (x, pi) = sys.forward(&full).unwrap();
            let mut z = x.clone();
            z.extend(&pi[..2]);
            let f = |i: usize| PhaseFunction::coordinate(5, i);
            let b = |a: usize, bidx: usize| ps.bracket(&f(a), &f(bidx), &z, &tol).unwrap();
            assert!((b(0, 3) - 1.0).abs() < 1e-12);
            assert!((b(1, 4) - 1.0).abs() < 1e-12);
            assert!((b(2, 3) + x[0] / x[2]).abs() < 1e-12);
            assert!((b(2, 4) + x[1] / x[2]).abs() < 1e-12);
            // The coordinate block commutes.
            for i in 0..3 {
                for j in 0..3 {
                    assert_eq!(b(i, j), 0.0);
                }
            }
            // {π1, π2} = 0 for the sphere's commuting tangent fields.
            assert_eq!(b(3, 4), 0.0);
        }
    }

    #[test]
    fn x_squared_is_a_casimir_of_the_tensor() {
        let sys = SphereSystem::new(1.0, 1.0).unwrap();
        let ps = sys.structure();
        let mut rng = StdRng::seed_from_u64(24);
        for _ in 0..20 {
            let full = sys.random_on_shell_in_chart(&mut rng, 0.3);
            let (x, pi) = sys.forward(&full).unwrap();
            let mut z = x.clone();
            z.extend(&pi[..2]);
            let omega = ps.tensor(&z).unwrap();
            // ∇(x²) = (2x, 0, 0); its contraction with the tensor vanishes.
            let grad = [2.0 * x[0], 2.0 * x[1], 2.0 * x[2], 0.0, 0.0];
            let flow = omega.tr_matvec(&grad);
            assert!(vecops::norm_inf(&flow) < 1e-12);
        }
    }

    #[test]
    fn generic_reduction_reproduces_the_bespoke_tensor_and_hamiltonian() {
        let sys = SphereSystem::new(1.4, 1.1).unwrap();
        let generic = sys.constrained_system();
        let tol = Tolerances::default();
        let rs = reduce_intermediate(&generic, tol);
        let bespoke = sys.structure();
        let mut rng = StdRng::seed_from_u64(25);
        for _ in 0..100 {
            let full = sys.random_on_shell_in_chart(&mut rng, 0.35);
            let (x, pi) = sys.forward(&full).unwrap();
            let state = ReducedPhaseState {
                q: x.clone(),
                momenta: pi[..2].to_vec(),
                chart: vec![2],
            };
            let omega_generic = rs.structure(&[2]).tensor(&state.packed()).unwrap();
            let mut z5 = x.clone();
            z5.extend(&pi[..2]);
            let omega_bespoke = bespoke.tensor(&z5).unwrap();
            assert!(
                omega_generic.sub(&omega_bespoke).max_abs() < 1e-10,
                "tensor deviation {:.3e}",
                omega_generic.sub(&omega_bespoke).max_abs()
            );
            let h_generic = rs.generic_hamiltonian(&state).unwrap();
            let h_bespoke = sys.reduced_hamiltonian(&x, &pi[..2]);
            assert!((h_generic - h_bespoke).abs() < 1e-10);
        }
    }

    #[test]
    fn closed_form_override_tracks_the_substitution_path() {
        // Installing the closed-form energy as an override must not change
        // either the values or the flow in the chart the form is written in.
        use crate::field::VectorField;
        let sys_desc = SphereSystem::new(1.4, 1.1).unwrap();
        let generic = sys_desc.constrained_system();
        let tol = Tolerances::default();
        let plain = reduce_intermediate(&generic, tol);
        let with_override = reduce_intermediate(&generic, tol).with_hamiltonian_override(
            move |q: &[f64], pi: &[f64]| sys_desc.reduced_hamiltonian(q, pi),
        );
        let mut rng = StdRng::seed_from_u64(27);
        for _ in 0..20 {
            let full = sys_desc.random_on_shell_in_chart(&mut rng, 0.4);
            let (x, pi) = sys_desc.forward(&full).unwrap();
            let state = ReducedPhaseState {
                q: x,
                momenta: pi[..2].to_vec(),
                chart: vec![2],
            };
            let a = plain.reduced_hamiltonian(&state).unwrap();
            let b = with_override.reduced_hamiltonian(&state).unwrap();
            assert!((a - b).abs() < 1e-12);
            let fa = plain.vector_field(&[2]).eval(&state.packed()).unwrap();
            let fb = with_override
                .vector_field(&[2])
                .eval(&state.packed())
                .unwrap();
            assert!(vecops::max_abs_diff(&fa, &fb) < 1e-8);
        }
    }

    #[test]
    fn casimir_drift_stays_on_the_leaf() {
        let sys = SphereSystem::new(1.0, 1.0).unwrap();
        let ps = sys.structure();
        let tol = Tolerances::tight();
        let z0 = [0.1, 0.3, (1.0f64 - 0.1).sqrt(), 0.8, -0.2];
        let drift = casimir_drift(
            &ps,
            &sys.casimir(),
            &sys.hamiltonian_function(),
            &z0,
            (0.0, 1.0),
            &tol,
        )
        .unwrap();
        assert!(drift < 1e-8, "leaf drift {drift:.3e}");
    }

    #[test]
    fn flow_follows_a_great_circle_at_constant_speed() {
        let sys = SphereSystem::new(1.0, 1.3).unwrap();
        let generic = sys.constrained_system();
        let tol = Tolerances::default();
        let rs = reduce_intermediate(&generic, tol);
        let mut rng = StdRng::seed_from_u64(26);
        let full0 = sys.random_on_shell(&mut rng);
        let v0 = vecops::scaled(&full0.p, 1.0 / sys.mass);
        // Conserved laboratory angular momentum fixes the circle's plane.
        let plane_normal = vec![
            full0.q[1] * v0[2] - full0.q[2] * v0[1],
            full0.q[2] * v0[0] - full0.q[0] * v0[2],
            full0.q[0] * v0[1] - full0.q[1] * v0[0],
        ];
        let speed0 = vecops::norm2(&v0);
        let z0 = rs.project(&full0).unwrap();
        let traj = reduced_flow(&rs, &z0, 1.0, 0.05, &tol).unwrap();
        for s in &traj.samples {
            let (x, p) = s.state.split_at(3);
            // Radius pinned to the leaf.
            let r2 = vecops::dot(x, x);
            assert!((r2 - sys.radius * sys.radius).abs() < 1e-8);
            // In-plane motion.
            let off_plane =
                vecops::dot(x, &plane_normal) / (vecops::norm2(&plane_normal) * sys.radius);
            assert!(off_plane.abs() < 1e-6, "left the great circle: {off_plane:.3e}");
            // Constant speed.
            let speed = vecops::norm2(p) / sys.mass;
            assert!((speed - speed0).abs() < 1e-8);
        }
    }
}
