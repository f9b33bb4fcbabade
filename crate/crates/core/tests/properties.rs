//! Property tests over randomized inputs: coordinate-change round trips,
//! definiteness criteria agreement, and antisymmetry of assembled tensors.

use proptest::prelude::*;

use holomech::lagrangian::FullPhaseState;
use holomech::numeric::mat::vecops;
use holomech::numeric::{is_positive_definite, Mat, Tolerances};
use holomech::rigid_body::{momentum_join, momentum_split};
use holomech::sphere::SphereSystem;

fn small_floats(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sphere_momenta_maps_are_mutually_inverse(
        x in small_floats(3),
        p in small_floats(3),
    ) {
        prop_assume!(x[2].abs() > 0.2);
        let sys = SphereSystem::new(1.0, 1.0).unwrap();
        let (xq, pi) = sys.forward(&FullPhaseState::new(x.clone(), p.clone())).unwrap();
        let back = sys.backward(&xq, &pi);
        prop_assert!(vecops::max_abs_diff(&back, &p) < 1e-10);
    }

    #[test]
    fn definiteness_criteria_agree(
        entries in small_floats(16),
        shift in -1.5f64..1.5,
    ) {
        let a = Mat::from_fn(4, 4, |i, j| entries[4 * i + j]);
        let sym = a.add(&a.transpose()).scaled(0.5);
        let m = sym.add(&Mat::identity(4).scaled(shift));
        let by_minors = is_positive_definite(&m).unwrap();
        let by_eigen = m.eigenvalues_symmetric().unwrap()[0] > 0.0;
        let by_factor = m.cholesky().is_ok();
        prop_assert_eq!(by_minors, by_eigen);
        prop_assert_eq!(by_minors, by_factor);
    }

    #[test]
    fn momentum_split_round_trips(
        r_entries in small_floats(9),
        p_entries in small_floats(9),
    ) {
        let r = Mat::from_fn(3, 3, |i, j| r_entries[3 * i + j]);
        prop_assume!(r.det().abs() > 0.05);
        let p = Mat::from_fn(3, 3, |i, j| p_entries[3 * i + j]);
        let (s, m) = momentum_split(&r, &p).unwrap();
        // The symmetric part is symmetric by construction.
        prop_assert!(s.asymmetry() < 1e-12);
        let back = momentum_join(&r, &s, &m);
        prop_assert!(back.sub(&p).max_abs() < 1e-9);
    }

    #[test]
    fn assembled_sphere_tensor_is_antisymmetric(
        x in small_floats(3),
        pi in small_floats(2),
    ) {
        prop_assume!(x[2].abs() > 0.2);
        let sys = SphereSystem::new(1.0, 1.0).unwrap();
        let ps = sys.structure();
        let mut z = x;
        z.extend(pi);
        let w = ps.tensor(&z).unwrap();
        prop_assert!(w.add(&w.transpose()).max_abs() < 1e-12);
    }

    #[test]
    fn tangent_basis_annihilates_the_constraint_gradient(
        x in small_floats(3),
    ) {
        let norm = vecops::norm2(&x);
        prop_assume!(norm > 0.3);
        let sys = SphereSystem::new(1.0, 1.0).unwrap();
        let generic = sys.constrained_system();
        let tol = Tolerances::default();
        let basis =
            holomech::geometry::fundamental_solutions(generic.constraints(), &x, &tol).unwrap();
        let jac = generic.constraints().jacobian(&x, &tol).unwrap();
        for i in 0..2 {
            let dot = vecops::dot(jac.row(0), basis.g_lower.row(i));
            prop_assert!(dot.abs() < 1e-10);
        }
        let prod = basis.g_full.matmul(&basis.g_full_inv);
        prop_assert!(prod.sub(&Mat::identity(3)).max_abs() < 1e-9);
    }
}
