//! Seeded verification suites for the built-in systems: Jacobi residuals of
//! every bracket structure, vanishing-bracket and Dirac-Casimir checks, the
//! reduction-equivalence report, route-equivalence trajectories, and the
//! conservation drifts. The CLI renders the resulting report as a table.

use std::sync::Arc;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::geometry::{basis_partial, fundamental_solutions, fundamental_solutions_in_chart};
use crate::lagrangian::{ConstrainedSystem, FullPhaseState};
use crate::lie::lie_solve;
use crate::numeric::mat::vecops;
use crate::numeric::rk::rk_drive;
use crate::numeric::{Mat, Tolerances};
use crate::poisson::{
    dirac_bracket, intermediate_structure, PhaseFunction, PoissonStructure, StructureKind,
};
use crate::reduction::{
    build_tertiary, reduce_alternative, reduce_dirac, reduce_intermediate, reduced_flow,
    verify_affirmation, ReducedSystem,
};
use crate::rigid_body::{
    self, euler_poisson_field, euler_poisson_rhs, BodyState, BodyStructureKind, InertiaData,
};
use crate::sphere::SphereSystem;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckRow {
    pub name: String,
    pub max_residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerificationReport {
    pub system: String,
    pub seed: u64,
    pub samples: usize,
    pub checks: Vec<CheckRow>,
}

impl VerificationReport {
    fn push(&mut self, name: &str, max_residual: f64, tolerance: f64) {
        self.checks.push(CheckRow {
            name: name.to_string(),
            max_residual,
            tolerance,
            pass: max_residual.is_finite() && max_residual <= tolerance,
        });
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "system: {}   seed: {}   samples: {}\n",
            self.system, self.seed, self.samples
        ));
        out.push_str(&format!(
            "{:<38} {:>13} {:>10} {:>6}\n",
            "check", "max residual", "tolerance", "status"
        ));
        for c in &self.checks {
            out.push_str(&format!(
                "{:<38} {:>13.3e} {:>10.1e} {:>6}\n",
                c.name,
                c.max_residual,
                c.tolerance,
                if c.pass { "pass" } else { "FAIL" }
            ));
        }
        out
    }
}

/// Systems the verification suite knows how to sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BuiltinSystem {
    Sphere,
    RigidBody,
}

impl BuiltinSystem {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "sphere" => Ok(BuiltinSystem::Sphere),
            "rigid_body" | "rigid-body" | "body" => Ok(BuiltinSystem::RigidBody),
            other => Err(Error::Invalid(format!("unknown system '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BuiltinSystem::Sphere => "sphere",
            BuiltinSystem::RigidBody => "rigid_body",
        }
    }
}

/// Max Jacobi residual of a structure over a set of points.
pub fn jacobi_max(ps: &PoissonStructure, points: &[Vec<f64>]) -> Result<f64> {
    let mut worst = 0.0f64;
    for z in points {
        worst = worst.max(ps.jacobi_residual(z)?);
    }
    Ok(worst)
}

/// Max antisymmetry defect |ω + ωᵀ| of a structure over a set of points.
pub fn antisymmetry_max(ps: &PoissonStructure, points: &[Vec<f64>]) -> Result<f64> {
    let mut worst = 0.0f64;
    for z in points {
        let w = ps.tensor(z)?;
        worst = worst.max(w.add(&w.transpose()).max_abs());
    }
    Ok(worst)
}

fn random_smooth_function(rng: &mut impl Rng, dim: usize) -> PhaseFunction {
    let lin: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let quad = Mat::from_fn(dim, dim, |_, _| rng.gen_range(-0.5..0.5));
    let lin2 = lin.clone();
    let quad2 = quad.clone();
    PhaseFunction::with_gradient(
        move |z: &[f64]| vecops::dot(&lin, z) + vecops::dot(z, &quad.matvec(z)),
        move |z: &[f64]| {
            let mut g = quad2.matvec(z);
            let gt = quad2.tr_matvec(z);
            for i in 0..z.len() {
                g[i] += gt[i] + lin2[i];
            }
            g
        },
    )
}

/// |{q^A, G_α}| and |{π_i, G_α}| under the canonical bracket over (q, p):
/// the defining property of the constraint-adapted coordinates, evaluated
/// through the generic bracket machinery with analytic gradients.
pub fn vanishing_bracket_max(
    sys: &Arc<ConstrainedSystem>,
    states: &[FullPhaseState],
    tol: &Tolerances,
) -> Result<f64> {
    let n = sys.dim();
    let m = sys.constraints().count();
    let canonical = PoissonStructure::canonical(n);
    let mut worst = 0.0f64;
    for st in states {
        let z = st.packed();
        let basis = fundamental_solutions(sys.constraints(), &st.q, tol)?;
        let jac = sys.constraints().jacobian(&st.q, tol)?;
        let partials: Vec<Mat> = (0..n)
            .map(|e| basis_partial(sys.constraints(), &st.q, &basis.pivots, e, tol))
            .collect::<Result<_>>()?;
        let mut functions: Vec<PhaseFunction> = Vec::with_capacity(n + (n - m));
        for a in 0..n {
            functions.push(PhaseFunction::coordinate(2 * n, a));
        }
        for i in 0..(n - m) {
            // π_i(q, p) = G_i(q)·p with its closed-form gradient frozen at
            // the evaluation point.
            let mut grad = vec![0.0; 2 * n];
            for e in 0..n {
                let mut s = 0.0;
                for a in 0..n {
                    s += partials[e].get(m + i, a) * st.p[a];
                }
                grad[e] = s;
            }
            for a in 0..n {
                grad[n + a] = basis.g_lower.get(i, a);
            }
            let row: Vec<f64> = basis.g_lower.row(i).to_vec();
            let val = vecops::dot(&row, &st.p);
            functions.push(PhaseFunction::with_gradient(
                move |_z: &[f64]| val,
                move |_z: &[f64]| grad.clone(),
            ));
        }
        for alpha in 0..m {
            let mut ggrad = vec![0.0; 2 * n];
            ggrad[..n].copy_from_slice(jac.row(alpha));
            let gval = sys.constraints().values(&st.q)[alpha];
            let gfun = PhaseFunction::with_gradient(
                move |_z: &[f64]| gval,
                move |_z: &[f64]| ggrad.clone(),
            );
            for f in &functions {
                worst = worst.max(canonical.bracket(f, &gfun, &z, tol)?.abs());
            }
        }
    }
    Ok(worst)
}

/// Jacobi residual of the full (q, π) bracket tensor, each point checked in
/// its own frozen chart.
pub fn jacobi_intermediate_max(
    sys: &Arc<ConstrainedSystem>,
    states: &[FullPhaseState],
    tol: &Tolerances,
) -> Result<f64> {
    let n = sys.dim();
    let mut worst = 0.0f64;
    for st in states {
        let basis = fundamental_solutions(sys.constraints(), &st.q, tol)?;
        let ps = intermediate_structure(
            sys.constraints().clone(),
            basis.pivots.clone(),
            (0..2 * n).map(|i| format!("z{i}")).collect(),
            *tol,
        );
        let mut z = st.q.clone();
        z.extend(basis.g_full.matvec(&st.p));
        worst = worst.max(ps.jacobi_residual(&z)?);
    }
    Ok(worst)
}

/// Jacobi residual of the reduced bracket tensor of a route, per-point
/// charts.
pub fn jacobi_reduced_max(
    rs: &ReducedSystem,
    states: &[FullPhaseState],
    tol: &Tolerances,
) -> Result<f64> {
    let mut worst = 0.0f64;
    for st in states {
        let state = rs.project(st)?;
        let ps = rs.structure(&state.chart);
        worst = worst.max(ps.jacobi_residual(&state.packed())?);
    }
    let _ = tol;
    Ok(worst)
}

/// |{f, T_I}_D| for random smooth f at the given states.
pub fn dirac_casimir_max(
    sys: &Arc<ConstrainedSystem>,
    states: &[FullPhaseState],
    functions: usize,
    rng: &mut impl Rng,
    tol: &Tolerances,
) -> Result<f64> {
    let n = sys.dim();
    let tert = build_tertiary(sys, *tol);
    let cs = tert.constraint_set();
    let canonical = PoissonStructure::canonical(n);
    let mut worst = 0.0f64;
    for st in states {
        let z = st.packed();
        for _ in 0..functions {
            let f = random_smooth_function(rng, 2 * n);
            for t in cs.functions() {
                let v = dirac_bracket(&canonical, &cs, &f, t, &z, tol)?;
                worst = worst.max(v.abs());
            }
        }
    }
    Ok(worst)
}

/// Configuration deviation between the four evolution routes from matched
/// initial data over unit time.
pub fn route_equivalence_max(
    sys: &Arc<ConstrainedSystem>,
    full0: &FullPhaseState,
    t_end: f64,
    sample_dt: f64,
    tol: &Tolerances,
) -> Result<f64> {
    let n = sys.dim();
    let routes: Vec<ReducedSystem> = vec![
        reduce_intermediate(sys, *tol),
        reduce_dirac(sys, *tol),
        reduce_alternative(sys, *tol),
    ];
    let mut q_tracks: Vec<Vec<Vec<f64>>> = Vec::new();
    for rs in &routes {
        let z0 = rs.project(full0)?;
        let traj = reduced_flow(rs, &z0, t_end, sample_dt, tol)?;
        q_tracks.push(
            traj.samples
                .iter()
                .map(|s| s.state[..n].to_vec())
                .collect(),
        );
    }
    // Second-order multiplier route on (q, q̇).
    {
        let v0 = sys.legendre_velocity(full0)?;
        let field = sys.multiplier_field(*tol);
        let mut z = full0.q.clone();
        z.extend(v0);
        let mut track = vec![z[..n].to_vec()];
        let steps = (t_end / sample_dt).ceil() as usize;
        let mut t = 0.0;
        for _ in 0..steps {
            let t_next = (t + sample_dt).min(t_end);
            z = rk_drive(&field, &z, t, t_next, tol, &mut |_, _| {})?;
            track.push(z[..n].to_vec());
            t = t_next;
        }
        q_tracks.push(track);
    }
    let mut worst = 0.0f64;
    for a in 0..q_tracks.len() {
        for b in (a + 1)..q_tracks.len() {
            if q_tracks[a].len() != q_tracks[b].len() {
                return Err(Error::Invalid("route sample grids disagree".into()));
            }
            for (qa, qb) in q_tracks[a].iter().zip(&q_tracks[b]) {
                worst = worst.max(vecops::max_abs_diff(qa, qb));
            }
        }
    }
    Ok(worst)
}

/// The generic reduction pipeline against the hand-coded component
/// equations: deviation of (q̇, π̇) at a random on-shell state.
pub fn euler_poisson_reduction_deviation(
    sys: &Arc<ConstrainedSystem>,
    inertia: &InertiaData,
    full: &FullPhaseState,
    body: &BodyState,
    tol: &Tolerances,
) -> Result<f64> {
    let rs = reduce_intermediate(sys, *tol);
    let state = rs.project(full)?;
    let field = rs.vector_field(&state.chart);
    let zdot = field.eval(&state.packed())?;
    let (qdot_gen, pidot_gen) = (&zdot[..9], &zdot[9..]);

    // Hand side, mapped into the same reduced coordinates.
    let (rdot, mdot) = euler_poisson_rhs(inertia, body)?;
    let qdot_hand = rdot.data().to_vec();
    // ṗ = R̈ g with R̈ = Ṙ Ŵ + R Ŵ̇, Ŵ = −ε·Ω, Ŵ̇ = −ε·Ω̇.
    let omega = inertia.inertia.solve(&body.m)?;
    let omega_dot = inertia.inertia.solve(&mdot)?;
    let what = Mat::from_fn(3, 3, |m, j| {
        -(0..3)
            .map(|k| rigid_body::eps(m, j, k) * omega[k])
            .sum::<f64>()
    });
    let what_dot = Mat::from_fn(3, 3, |m, j| {
        -(0..3)
            .map(|k| rigid_body::eps(m, j, k) * omega_dot[k])
            .sum::<f64>()
    });
    let rddot = rdot.matmul(&what).add(&body.r.matmul(&what_dot));
    let pdot = rddot.matmul(&inertia.g);
    // π̇_i = Σ_E ∂_E(G_i)·q̇ p + G_i·ṗ.
    let basis = fundamental_solutions_in_chart(sys.constraints(), &full.q, &state.chart, tol)?;
    let partials: Vec<Mat> = (0..9)
        .map(|e| basis_partial(sys.constraints(), &full.q, &state.chart, e, tol))
        .collect::<Result<_>>()?;
    let mut pidot_hand = vec![0.0; 3];
    for i in 0..3 {
        let mut v = 0.0;
        for e in 0..9 {
            let mut dgi_p = 0.0;
            for a in 0..9 {
                dgi_p += partials[e].get(6 + i, a) * full.p[a];
            }
            v += dgi_p * qdot_hand[e];
        }
        for a in 0..9 {
            v += basis.g_lower.get(i, a) * pdot.data()[a];
        }
        pidot_hand[i] = v;
    }
    let dev_q = vecops::max_abs_diff(qdot_gen, &qdot_hand);
    let dev_pi = vecops::max_abs_diff(pidot_gen, &pidot_hand);
    Ok(dev_q.max(dev_pi))
}

fn sphere_report(seed: u64, samples: usize, corrupt: bool) -> Result<VerificationReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tol = Tolerances::default();
    let sphere = SphereSystem::new(1.0, 1.0)?;
    let sys = sphere.constrained_system();
    let mut report = VerificationReport {
        system: "sphere".into(),
        seed,
        samples,
        checks: Vec::new(),
    };

    // Sample pools. On-chart points keep |x3| comfortably away from zero.
    let full_states: Vec<FullPhaseState> = (0..samples)
        .map(|_| sphere.random_on_shell_in_chart(&mut rng, 0.35))
        .collect();
    let five_dim: Vec<Vec<f64>> = full_states
        .iter()
        .map(|st| {
            let (x, pi) = sphere.forward(st).expect("on-chart sample");
            let mut z = x;
            z.extend(&pi[..2]);
            z
        })
        .collect();
    let twelve: Vec<Vec<f64>> = full_states
        .iter()
        .map(|st| {
            let basis = fundamental_solutions_in_chart(sys.constraints(), &st.q, &[2], &tol)
                .expect("chart");
            let mut z = st.q.clone();
            z.extend(basis.g_full.matvec(&st.p));
            z
        })
        .collect();
    let canonical_pts: Vec<Vec<f64>> = full_states.iter().map(|st| st.packed()).collect();

    let canonical = PoissonStructure::canonical(3);
    report.push("jacobi_canonical", jacobi_max(&canonical, &canonical_pts)?, 1e-8);
    let bespoke = sphere.structure();
    report.push("jacobi_surface_tensor", jacobi_max(&bespoke, &five_dim)?, 1e-8);
    report.push(
        "jacobi_momenta_change",
        jacobi_intermediate_max(&sys, &full_states, &tol)?,
        1e-8,
    );
    let rs_int = reduce_intermediate(&sys, tol);
    report.push(
        "jacobi_reduced",
        jacobi_reduced_max(&rs_int, &full_states, &tol)?,
        1e-8,
    );

    let inter = intermediate_structure(
        sys.constraints().clone(),
        vec![2],
        (0..6).map(|i| format!("z{i}")).collect(),
        tol,
    );
    let reduced = rs_int.structure(&[2]);
    let mut anti = antisymmetry_max(&canonical, &canonical_pts)?;
    anti = anti.max(antisymmetry_max(&bespoke, &five_dim)?);
    anti = anti.max(antisymmetry_max(&inter, &twelve)?);
    anti = anti.max(antisymmetry_max(&reduced, &five_dim)?);
    report.push("antisymmetry", anti, 1e-12);

    report.push(
        "vanishing_brackets_with_constraints",
        vanishing_bracket_max(&sys, &full_states, &tol)?,
        1e-10,
    );
    let casimir_states = &full_states[..full_states.len().min(100)];
    report.push(
        "dirac_casimir",
        dirac_casimir_max(&sys, casimir_states, 20, &mut rng, &tol)?,
        1e-9,
    );
    let tert = build_tertiary(&sys, tol);
    let mut rank_ok = 0.0f64;
    for st in &full_states {
        if tert.momentum_rank(&st.q)? != 1 {
            rank_ok = 1.0;
        }
    }
    report.push("tertiary_momentum_rank", rank_ok, 0.5);

    let aff = verify_affirmation(&sys, &full_states, &tol)?;
    report.push("affirmation_tensor", aff.max_tensor_deviation, 1e-9);
    report.push("affirmation_field", aff.max_field_deviation, 1e-8);

    let start = sphere.random_on_shell_in_chart(&mut rng, 0.45);
    report.push(
        "route_equivalence",
        route_equivalence_max(&sys, &start, 1.0, 0.05, &tol)?,
        1e-6,
    );

    let flow_tol = Tolerances::tight();
    let rs = reduce_intermediate(&sys, flow_tol);
    let z0 = rs.project(&start)?;
    let traj = reduced_flow(&rs, &z0, 1.0, 0.05, &flow_tol)?;
    report.push(
        "casimir_leaf_drift",
        traj.max_diagnostic("constraint_residual").unwrap_or(f64::NAN),
        1e-8,
    );
    report.push(
        "energy_drift",
        traj.max_diagnostic("energy_drift").unwrap_or(f64::NAN),
        1e-8,
    );

    if corrupt {
        let corrupted = corrupted_structure();
        report.push(
            "jacobi_corrupted_control",
            jacobi_max(&corrupted, &corrupt_points(seed))?,
            1e-8,
        );
    }
    Ok(report)
}

fn rigid_report(seed: u64, samples: usize, corrupt: bool) -> Result<VerificationReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tol = Tolerances::default();
    let inertia = InertiaData::from_g_diag([1.0, 2.0, 3.0])?;
    let sys = rigid_body::constrained_system(&inertia)?;
    let mut report = VerificationReport {
        system: "rigid_body".into(),
        seed,
        samples,
        checks: Vec::new(),
    };

    let pool: Vec<(FullPhaseState, BodyState)> = (0..samples)
        .map(|_| rigid_body::random_on_shell(&inertia, &mut rng))
        .collect();
    let body_pts: Vec<Vec<f64>> = pool.iter().map(|(_, b)| b.packed()).collect();
    let canonical_pts: Vec<Vec<f64>> = pool.iter().map(|(f, _)| f.packed()).collect();

    let canonical = PoissonStructure::canonical(9);
    // Jacobi checks on the 18-dim canonical structure are trivially zero
    // and costly; a reduced sample keeps the suite fast.
    let canon_sub = &canonical_pts[..canonical_pts.len().min(20)];
    report.push("jacobi_canonical", jacobi_max(&canonical, canon_sub)?, 1e-8);

    let full_structure = rigid_body::rigid_body_structure(BodyStructureKind::Full);
    report.push("jacobi_body_full", jacobi_max(&full_structure, &body_pts)?, 1e-8);
    let chetaev = rigid_body::rigid_body_structure(BodyStructureKind::Chetaev);
    report.push("jacobi_body_chetaev", jacobi_max(&chetaev, &body_pts)?, 1e-8);

    let full_states: Vec<FullPhaseState> = pool.iter().map(|(f, _)| f.clone()).collect();
    let inter_states = &full_states[..full_states.len().min(30)];
    report.push(
        "jacobi_momenta_change",
        jacobi_intermediate_max(&sys, inter_states, &tol)?,
        1e-8,
    );

    let rs_int = reduce_intermediate(&sys, tol);
    report.push(
        "jacobi_reduced",
        jacobi_reduced_max(&rs_int, inter_states, &tol)?,
        1e-8,
    );

    let mut anti = antisymmetry_max(&full_structure, &body_pts)?;
    anti = anti.max(antisymmetry_max(&chetaev, &body_pts)?);
    report.push("antisymmetry", anti, 1e-12);
    report.push(
        "vanishing_brackets_with_constraints",
        vanishing_bracket_max(&sys, &full_states[..full_states.len().min(30)], &tol)?,
        1e-10,
    );
    report.push(
        "dirac_casimir",
        dirac_casimir_max(&sys, &full_states[..full_states.len().min(10)], 10, &mut rng, &tol)?,
        1e-9,
    );
    let tert = build_tertiary(&sys, tol);
    let mut rank_bad = 0.0f64;
    for st in full_states.iter().take(30) {
        if tert.momentum_rank(&st.q)? != 6 {
            rank_bad = 1.0;
        }
    }
    report.push("tertiary_momentum_rank", rank_bad, 0.5);

    let aff_states = &full_states[..full_states.len().min(100)];
    let aff = verify_affirmation(&sys, aff_states, &tol)?;
    report.push("affirmation_tensor", aff.max_tensor_deviation, 1e-9);
    report.push("affirmation_field", aff.max_field_deviation, 1e-8);

    // Matched-route comparison from the universal initial conditions.
    let omega0 = [0.8, -0.5, 0.6];
    let w = Mat::from_fn(3, 3, |m, j| {
        -(0..3)
            .map(|k| rigid_body::eps(m, j, k) * omega0[k])
            .sum::<f64>()
    });
    let p0 = w.matmul(&inertia.g);
    let full0 = FullPhaseState::new(Mat::identity(3).data().to_vec(), p0.data().to_vec());
    report.push(
        "route_equivalence",
        route_equivalence_max(&sys, &full0, 1.0, 0.05, &tol)?,
        1e-6,
    );

    let mut ep_dev = 0.0f64;
    for (f, b) in pool.iter().take(samples.min(100)) {
        ep_dev = ep_dev.max(euler_poisson_reduction_deviation(&sys, &inertia, f, b, &tol)?);
    }
    report.push("euler_poisson_from_reduction", ep_dev, 1e-8);

    let flow_tol = Tolerances::tight();
    let traj = rigid_body::simulate_body(
        &inertia,
        &[1.0, 1.0, 1.0],
        1.0,
        0.05,
        rigid_body::BodyMethod::Rk,
        &flow_tol,
    )?;
    let m0 = inertia.inertia.matvec(&[1.0, 1.0, 1.0]);
    let msq0 = vecops::dot(&m0, &m0);
    let h0 = 0.5 * vecops::dot(&m0, &inertia.inertia.solve(&m0)?);
    report.push(
        "energy_relative_drift",
        traj.max_diagnostic("energy_drift").unwrap_or(f64::NAN) / h0.abs(),
        1e-9,
    );
    report.push(
        "momentum_relative_drift",
        traj.max_diagnostic("momentum_drift").unwrap_or(f64::NAN) / msq0,
        1e-9,
    );
    report.push(
        "orthogonality_drift",
        traj.max_diagnostic("orthogonality_residual").unwrap_or(f64::NAN),
        1e-8,
    );

    // Both bracket structures must generate the same motion from on-shell
    // data; compare the two flows along a unit-time trajectory.
    {
        let z0 = BodyState {
            r: Mat::identity(3),
            m: inertia.inertia.matvec(&[0.9, -0.6, 0.4]),
        }
        .packed();
        let f_full = rigid_body::bracket_flow(&inertia, BodyStructureKind::Full, &flow_tol);
        let f_chet = rigid_body::bracket_flow(&inertia, BodyStructureKind::Chetaev, &flow_tol);
        let mut za = z0.clone();
        let mut zb = z0.clone();
        let mut worst = 0.0f64;
        let mut t = 0.0;
        for _ in 0..20 {
            let t_next = t + 0.05;
            za = rk_drive(&f_full, &za, t, t_next, &flow_tol, &mut |_, _| {})?;
            zb = rk_drive(&f_chet, &zb, t, t_next, &flow_tol, &mut |_, _| {})?;
            worst = worst.max(vecops::max_abs_diff(&za, &zb));
            t = t_next;
        }
        report.push("structures_flow_agreement", worst, 1e-8);
    }

    // High-order series against the adaptive oracle on the asymmetric top.
    {
        let field = euler_poisson_field(&inertia)?;
        let z0 = BodyState {
            r: Mat::identity(3),
            m: inertia.inertia.matvec(&[1.0, 1.0, 1.0]),
        }
        .packed();
        let series = lie_solve(&field, &z0, 0.5, 20, 0.05, &[0.5])?;
        let oracle = rk_drive(&field, &z0, 0.0, 0.5, &flow_tol, &mut |_, _| {})?;
        let dev = vecops::max_abs_diff(series.last_state().unwrap(), &oracle);
        report.push("lie_series_vs_oracle", dev, 1e-8);
    }

    if corrupt {
        let corrupted = corrupted_structure();
        report.push(
            "jacobi_corrupted_control",
            jacobi_max(&corrupted, &corrupt_points(seed))?,
            1e-8,
        );
    }
    Ok(report)
}

fn corrupted_structure() -> PoissonStructure {
    // Canonical 2-DOF tensor with one symmetric, position-dependent entry:
    // breaks both antisymmetry and the Jacobi identity.
    let labels = vec!["q1".into(), "q2".into(), "p1".into(), "p2".into()];
    PoissonStructure::new(labels, StructureKind::Custom, |z: &[f64]| {
        let mut j = Mat::zeros(4, 4);
        j.set(0, 2, 1.0);
        j.set(2, 0, -1.0);
        j.set(1, 3, 1.0);
        j.set(3, 1, -1.0);
        j.set(0, 1, z[0] * z[0]);
        Ok(j)
    })
}

/// Run the full verification suite for a built-in system. Deterministic
/// for a fixed seed.
pub fn run_verification(
    system: BuiltinSystem,
    seed: u64,
    samples: usize,
    corrupt: bool,
) -> Result<VerificationReport> {
    if samples == 0 {
        return Err(Error::Invalid("samples must be positive".into()));
    }
    match system {
        BuiltinSystem::Sphere => sphere_report(seed, samples, corrupt),
        BuiltinSystem::RigidBody => rigid_report(seed, samples, corrupt),
    }
}

// Points for the corrupted negative control; any generic scatter works.
fn corrupt_points(seed: u64) -> Vec<Vec<f64>> {
    let mut rng = StdRng::seed_from_u64(seed);
    (0..20)
        .map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_suite_passes_and_is_deterministic() {
        let a = run_verification(BuiltinSystem::Sphere, 42, 25, false).unwrap();
        assert!(a.all_pass(), "{}", a.table());
        let b = run_verification(BuiltinSystem::Sphere, 42, 25, false).unwrap();
        assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn rigid_suite_passes() {
        let report = run_verification(BuiltinSystem::RigidBody, 42, 15, false).unwrap();
        assert!(report.all_pass(), "{}", report.table());
    }

    #[test]
    fn corrupted_control_fails_its_row() {
        let report = run_verification(BuiltinSystem::Sphere, 7, 5, true).unwrap();
        let row = report
            .checks
            .iter()
            .find(|c| c.name == "jacobi_corrupted_control")
            .expect("control row present");
        assert!(!row.pass);
        assert!(row.max_residual > 1e-3);
        assert!(!report.all_pass());
    }

    #[test]
    fn unknown_system_is_rejected() {
        assert!(BuiltinSystem::parse("torus").is_err());
    }
}
