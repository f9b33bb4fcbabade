//! Reduction of a constrained natural system to the intermediate
//! submanifold Φ_α = 0 carrying coordinates (q^A, m_i): via the
//! constraint-adapted momenta, via Dirac-bracket restriction, and via the
//! alternative momenta set that takes the tertiary constraints themselves
//! as part of the new momenta. The three routes plus the second-order
//! multiplier equations are kept in continuous agreement by the
//! equivalence verifier.

use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::field::{FnField, VectorField};
use crate::geometry::{
    basis_partial, basis_workspace, chart_quality, fundamental_solutions,
    fundamental_solutions_in_chart, TangentBasis, RECHART_CONDITION, RECHART_IMPROVEMENT,
};
use crate::lagrangian::{ConstrainedSystem, FullPhaseState};
use crate::numeric::mat::vecops;
use crate::numeric::rk::rk_drive;
use crate::numeric::{Mat, Tolerances};
use crate::poisson::{dirac_tensor, ConstraintSet, PhaseFunction, PoissonStructure, StructureKind};
use crate::traj::Trajectory;

/// Which construction produced a reduced system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReductionRoute {
    /// Constraint-adapted momenta π_B = G_BA p_A with π_α eliminated.
    Intermediate,
    /// Dirac bracket over (q, p) restricted to p_α = f_α(q, p_i).
    Dirac,
    /// Momenta (π_α = Φ_α, π_i = G_iA p_A) with π_α = 0 substituted.
    Alternative,
}

/// Point on the intermediate submanifold: all coordinates, reduced momenta,
/// and the pivot chart the momenta are expressed in.
#[derive(Debug, Clone)]
pub struct ReducedPhaseState {
    pub q: Vec<f64>,
    pub momenta: Vec<f64>,
    pub chart: Vec<usize>,
}

impl ReducedPhaseState {
    pub fn packed(&self) -> Vec<f64> {
        let mut z = self.q.clone();
        z.extend_from_slice(&self.momenta);
        z
    }
}

/// The tertiary constraints Φ_α = G_αB v^B(q, p) of a natural system,
/// exposed both as raw values and as phase functions with gradients.
pub struct TertiaryConstraint {
    sys: Arc<ConstrainedSystem>,
    tol: Tolerances,
}

pub fn build_tertiary(sys: &Arc<ConstrainedSystem>, tol: Tolerances) -> TertiaryConstraint {
    TertiaryConstraint {
        sys: Arc::clone(sys),
        tol,
    }
}

impl TertiaryConstraint {
    /// W(q) = G M̃, so that Φ = W p.
    pub fn momentum_jacobian(&self, q: &[f64]) -> Result<Mat> {
        let jac = self.sys.constraints().jacobian(q, &self.tol)?;
        let minv = self.sys.mass_inverse(q)?;
        Ok(jac.matmul(&minv))
    }

    pub fn values(&self, state: &FullPhaseState) -> Result<Vec<f64>> {
        Ok(self.momentum_jacobian(&state.q)?.matvec(&state.p))
    }

    /// Numerical rank of ∂Φ/∂p; equals n-k whenever the chart is healthy.
    pub fn momentum_rank(&self, q: &[f64]) -> Result<usize> {
        let w = self.momentum_jacobian(q)?;
        let wwt = w.matmul(&w.transpose());
        let eig = wwt.eigenvalues_symmetric()?;
        let max = eig.last().copied().unwrap_or(0.0).max(1e-300);
        Ok(eig.iter().filter(|&&e| e > 1e-20 * max).count())
    }

    /// The pairs (G_α, Φ_α) as functions over packed (q, p), with analytic
    /// gradients when the system carries analytic derivatives.
    pub fn phase_functions(&self) -> Vec<PhaseFunction> {
        let n = self.sys.dim();
        let m = self.sys.constraints().count();
        let mut out = Vec::with_capacity(2 * m);
        for alpha in 0..m {
            let sys = Arc::clone(&self.sys);
            let tol = self.tol;
            let g = move |z: &[f64]| sys.constraints().values(&z[..n])[alpha];
            let sys2 = Arc::clone(&self.sys);
            let grad = move |z: &[f64]| {
                let jac = sys2
                    .constraints()
                    .jacobian(&z[..n], &tol)
                    .expect("constraint jacobian");
                let mut gr = vec![0.0; 2 * n];
                gr[..n].copy_from_slice(jac.row(alpha));
                gr
            };
            out.push(PhaseFunction::with_gradient(g, grad));
        }
        for alpha in 0..m {
            let sys = Arc::clone(&self.sys);
            let tol = self.tol;
            let phi = move |z: &[f64]| {
                let (q, p) = z.split_at(n);
                let jac = sys.constraints().jacobian(q, &tol).expect("jacobian");
                let minv = sys.mass_inverse(q).expect("mass inverse");
                vecops::dot(jac.matmul(&minv).row(alpha), p)
            };
            if self.sys.has_analytic_derivatives() {
                let sys2 = Arc::clone(&self.sys);
                let tol = self.tol;
                let grad = move |z: &[f64]| {
                    let (q, p) = z.split_at(n);
                    let jac = sys2.constraints().jacobian(q, &tol).expect("jacobian");
                    let minv = sys2.mass_inverse(q).expect("mass inverse");
                    let hess = sys2.constraints().hessians(q, &tol).expect("hessians");
                    let w = jac.matmul(&minv);
                    let mut gr = vec![0.0; 2 * n];
                    gr[n..].copy_from_slice(w.row(alpha));
                    for e in 0..n {
                        // ∂_E W = (∂_E G) M̃ − G M̃ (∂_E M) M̃.
                        let dm = sys2.mass_partial(q, e, &tol).expect("mass partial");
                        let hrow: Vec<f64> = (0..n).map(|a| hess[alpha].get(a, e)).collect();
                        let term1 = minv.tr_matvec(&hrow);
                        let wrow = w.row(alpha).to_vec();
                        let term2 = minv.matvec(&dm.tr_matvec(&wrow));
                        gr[e] = vecops::dot(&term1, p) - vecops::dot(&term2, p);
                    }
                    gr
                };
                out.push(PhaseFunction::with_gradient(phi, grad));
            } else {
                out.push(PhaseFunction::new(phi));
            }
        }
        out
    }

    pub fn constraint_set(&self) -> ConstraintSet {
        ConstraintSet::new(self.phase_functions()).expect("even count by construction")
    }
}

/// A reduced Hamiltonian system on the intermediate submanifold.
type ReducedHamiltonianFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

pub struct ReducedSystem {
    base: Arc<ConstrainedSystem>,
    route: ReductionRoute,
    tol: Tolerances,
    hamiltonian_override: Option<ReducedHamiltonianFn>,
}

// Cached per-configuration pieces of the adapted-momenta tensor:
// {q^A, m_i} = G_iA and {m_i, m_j} = −[G_i, G_j]^D p_D with p = recon·m.
struct AdaptedParts {
    g_lower: Mat,
    c: crate::geometry::StructureFunctions,
    recon: Mat,
}

impl AdaptedParts {
    fn assemble(&self, n: usize, m: usize, momenta: &[f64]) -> Mat {
        let k = n - m;
        let p = self.recon.matvec(momenta);
        let contracted = self.c.contract(&p);
        let mut omega = Mat::zeros(n + k, n + k);
        for a in 0..n {
            for i in 0..k {
                let v = self.g_lower.get(i, a);
                omega.set(a, n + i, v);
                omega.set(n + i, a, -v);
            }
        }
        for i in 0..k {
            for j in 0..k {
                omega.set(n + i, n + j, -contracted.get(m + i, m + j));
            }
        }
        omega
    }
}

pub fn reduce_intermediate(sys: &Arc<ConstrainedSystem>, tol: Tolerances) -> ReducedSystem {
    ReducedSystem {
        base: Arc::clone(sys),
        route: ReductionRoute::Intermediate,
        tol,
        hamiltonian_override: None,
    }
}

pub fn reduce_dirac(sys: &Arc<ConstrainedSystem>, tol: Tolerances) -> ReducedSystem {
    ReducedSystem {
        base: Arc::clone(sys),
        route: ReductionRoute::Dirac,
        tol,
        hamiltonian_override: None,
    }
}

pub fn reduce_alternative(sys: &Arc<ConstrainedSystem>, tol: Tolerances) -> ReducedSystem {
    ReducedSystem {
        base: Arc::clone(sys),
        route: ReductionRoute::Alternative,
        tol,
        hamiltonian_override: None,
    }
}

impl ReducedSystem {
    pub fn base(&self) -> &Arc<ConstrainedSystem> {
        &self.base
    }

    pub fn route(&self) -> ReductionRoute {
        self.route
    }

    pub fn tolerances(&self) -> &Tolerances {
        &self.tol
    }

    /// Number of reduced momenta (the surface dimension k).
    pub fn momentum_dim(&self) -> usize {
        self.base.surface_dim()
    }

    /// Install a closed-form reduced Hamiltonian; the generic substitution
    /// path stays available for cross-checks via `generic_hamiltonian`.
    pub fn with_hamiltonian_override(
        mut self,
        h: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.hamiltonian_override = Some(Arc::new(h));
        self
    }

    fn basis(&self, q: &[f64], chart: &[usize]) -> Result<TangentBasis> {
        fundamental_solutions_in_chart(self.base.constraints(), q, chart, &self.tol)
    }

    /// π_α = f_α(q, m_i) (intermediate route), p_α = f_α(q, p_i) (Dirac
    /// route); identically zero for the alternative momenta.
    pub fn resolve_constraint(&self, chart: &[usize], q: &[f64], momenta: &[f64]) -> Result<Vec<f64>> {
        let m = self.base.constraints().count();
        match self.route {
            ReductionRoute::Alternative => Ok(vec![0.0; m]),
            ReductionRoute::Intermediate => {
                let basis = self.basis(q, chart)?;
                let jac = self.base.constraints().jacobian(q, &self.tol)?;
                let minv = self.base.mass_inverse(q)?;
                // Φ in π variables: (G M̃ G̃) π = 0; split the columns into
                // the π_α block and the π_i block.
                let w = jac.matmul(&minv).matmul(&basis.g_full_inv);
                let walpha = Mat::from_fn(m, m, |a, b| w.get(a, b));
                let mut rhs = vec![0.0; m];
                for a in 0..m {
                    let mut s = 0.0;
                    for (i, mi) in momenta.iter().enumerate() {
                        s += w.get(a, m + i) * mi;
                    }
                    rhs[a] = -s;
                }
                walpha.solve(&rhs).map_err(|_| {
                    Error::NotPositiveDefinite(
                        "constraint-resolution matrix singular (violated definiteness)".into(),
                    )
                })
            }
            ReductionRoute::Dirac => {
                let jac = self.base.constraints().jacobian(q, &self.tol)?;
                let minv = self.base.mass_inverse(q)?;
                let w = jac.matmul(&minv);
                let free: Vec<usize> = (0..self.base.dim())
                    .filter(|c| !chart.contains(c))
                    .collect();
                let wp = Mat::from_fn(m, m, |a, b| w.get(a, chart[b]));
                let mut rhs = vec![0.0; m];
                for a in 0..m {
                    let mut s = 0.0;
                    for (i, &fc) in free.iter().enumerate() {
                        s += w.get(a, fc) * momenta[i];
                    }
                    rhs[a] = -s;
                }
                wp.solve(&rhs).map_err(|_| {
                    Error::SecondClass("pivot block of ∂Φ/∂p is singular in this chart".into())
                })
            }
        }
    }

    /// The n x k matrix B(q) with p = B(q) · momenta: the reconstruction of
    /// the full canonical momenta is exactly linear in the reduced ones.
    pub fn reconstruction_matrix(&self, chart: &[usize], q: &[f64]) -> Result<Mat> {
        let n = self.base.dim();
        let m = self.base.constraints().count();
        let k = n - m;
        match self.route {
            ReductionRoute::Intermediate => {
                let basis = self.basis(q, chart)?;
                let jac = self.base.constraints().jacobian(q, &self.tol)?;
                let minv = self.base.mass_inverse(q)?;
                let w = jac.matmul(&minv).matmul(&basis.g_full_inv);
                let walpha = Mat::from_fn(m, m, |a, b| w.get(a, b));
                // Columns of the momenta stack: π_α = f-coefficients, π_i unit.
                let mut stack = Mat::zeros(n, k);
                for i in 0..k {
                    let rhs: Vec<f64> = (0..m).map(|a| -w.get(a, m + i)).collect();
                    let f = walpha.solve(&rhs).map_err(|_| {
                        Error::NotPositiveDefinite(
                            "constraint-resolution matrix singular (violated definiteness)"
                                .into(),
                        )
                    })?;
                    for a in 0..m {
                        stack.set(a, i, f[a]);
                    }
                    stack.set(m + i, i, 1.0);
                }
                Ok(basis.g_full_inv.matmul(&stack))
            }
            ReductionRoute::Alternative => {
                // Solve the stacked system (Φ rows; tangent rows) B = (0; 1).
                let basis = self.basis(q, chart)?;
                let jac = self.base.constraints().jacobian(q, &self.tol)?;
                let minv = self.base.mass_inverse(q)?;
                let w = jac.matmul(&minv);
                let mut stacked = Mat::zeros(n, n);
                for a in 0..m {
                    for c in 0..n {
                        stacked.set(a, c, w.get(a, c));
                    }
                }
                for i in 0..k {
                    for c in 0..n {
                        stacked.set(m + i, c, basis.g_lower.get(i, c));
                    }
                }
                let inv = stacked
                    .inverse()
                    .map_err(|_| Error::Variant("momenta change not invertible".into()))?;
                Ok(Mat::from_fn(n, k, |a, i| inv.get(a, m + i)))
            }
            ReductionRoute::Dirac => {
                let jac = self.base.constraints().jacobian(q, &self.tol)?;
                let minv = self.base.mass_inverse(q)?;
                let w = jac.matmul(&minv);
                let free: Vec<usize> = (0..n).filter(|c| !chart.contains(c)).collect();
                let wp = Mat::from_fn(m, m, |a, b| w.get(a, chart[b]));
                let wp_inv = wp.inverse().map_err(|_| {
                    Error::SecondClass("pivot block of ∂Φ/∂p is singular in this chart".into())
                })?;
                let wf = Mat::from_fn(m, k, |a, i| w.get(a, free[i]));
                let f_mat = wp_inv.matmul(&wf).scaled(-1.0);
                let mut b = Mat::zeros(n, k);
                for (a, &piv) in chart.iter().enumerate() {
                    for i in 0..k {
                        b.set(piv, i, f_mat.get(a, i));
                    }
                }
                for (i, &fc) in free.iter().enumerate() {
                    b.set(fc, i, 1.0);
                }
                Ok(b)
            }
        }
    }

    /// Rebuild the full canonical momenta from a reduced state.
    pub fn reconstruct(&self, state: &ReducedPhaseState) -> Result<FullPhaseState> {
        let b = self.reconstruction_matrix(&state.chart, &state.q)?;
        Ok(FullPhaseState::new(
            state.q.clone(),
            b.matvec(&state.momenta),
        ))
    }

    /// Project a full on-shell state into reduced coordinates, selecting a
    /// chart automatically. Slightly off-surface configurations are Newton-
    /// projected onto G = 0 first; the momenta keep only their reduced part.
    pub fn project(&self, full: &FullPhaseState) -> Result<ReducedPhaseState> {
        let q = project_onto_surface(&self.base, &full.q, &self.tol)?;
        let basis = fundamental_solutions(self.base.constraints(), &q, &self.tol)?;
        let momenta = match self.route {
            ReductionRoute::Intermediate | ReductionRoute::Alternative => {
                basis.g_lower.matvec(&full.p)
            }
            ReductionRoute::Dirac => basis.free.iter().map(|&c| full.p[c]).collect(),
        };
        Ok(ReducedPhaseState {
            q,
            momenta,
            chart: basis.pivots,
        })
    }

    /// Reduced Hamiltonian by substitution into the canonical one, ignoring
    /// any installed closed-form override.
    pub fn generic_hamiltonian(&self, state: &ReducedPhaseState) -> Result<f64> {
        let full = self.reconstruct(state)?;
        self.base.canonical_hamiltonian(&full)
    }

    pub fn reduced_hamiltonian(&self, state: &ReducedPhaseState) -> Result<f64> {
        match &self.hamiltonian_override {
            Some(h) => Ok(h(&state.q, &state.momenta)),
            None => self.generic_hamiltonian(state),
        }
    }

    fn adapted_parts(&self, chart: &[usize], q: &[f64]) -> Result<AdaptedParts> {
        let ws = basis_workspace(self.base.constraints(), q, chart, &self.tol)?;
        let c = ws.structure_functions();
        let recon = self.reconstruction_matrix(chart, q)?;
        Ok(AdaptedParts {
            g_lower: ws.basis.g_lower,
            c,
            recon,
        })
    }

    /// The reduced bracket tensor over (q^A, m_i) in a frozen chart. The
    /// per-configuration basis work is cached, so momenta-only probes (the
    /// bulk of the Jacobi verifier) are cheap.
    pub fn structure(&self, chart: &[usize]) -> PoissonStructure {
        let n = self.base.dim();
        let m = self.base.constraints().count();
        let k = self.momentum_dim();
        let mut labels: Vec<String> = self.base.labels().to_vec();
        labels.extend((1..=k).map(|i| format!("m{i}")));
        let chart = chart.to_vec();
        let tol = self.tol;
        match self.route {
            ReductionRoute::Intermediate | ReductionRoute::Alternative => {
                let rs = self.clone_internal();
                let cache: Mutex<Option<(Vec<f64>, Arc<AdaptedParts>)>> = Mutex::new(None);
                PoissonStructure::new(labels, StructureKind::Intermediate, move |z: &[f64]| {
                    let (q, mom) = z.split_at(n);
                    let parts = {
                        let mut guard = cache.lock().expect("tensor cache lock");
                        match guard.as_ref() {
                            Some((qc, parts)) if qc.as_slice() == q => Arc::clone(parts),
                            _ => {
                                let fresh = Arc::new(rs.adapted_parts(&chart, q)?);
                                *guard = Some((q.to_vec(), Arc::clone(&fresh)));
                                fresh
                            }
                        }
                    };
                    Ok(parts.assemble(n, m, mom))
                })
            }
            ReductionRoute::Dirac => {
                let rs = self.clone_internal();
                PoissonStructure::new(labels, StructureKind::Dirac, move |z: &[f64]| {
                    let (q, mom) = z.split_at(n);
                    rs.dirac_reduced_tensor(&chart, q, mom, &tol)
                })
            }
        }
    }

    fn clone_internal(&self) -> ReducedSystem {
        ReducedSystem {
            base: Arc::clone(&self.base),
            route: self.route,
            tol: self.tol,
            hamiltonian_override: self.hamiltonian_override.clone(),
        }
    }

    fn dirac_reduced_tensor(
        &self,
        chart: &[usize],
        q: &[f64],
        momenta: &[f64],
        tol: &Tolerances,
    ) -> Result<Mat> {
        let n = self.base.dim();
        let full = self.reconstruct(&ReducedPhaseState {
            q: q.to_vec(),
            momenta: momenta.to_vec(),
            chart: chart.to_vec(),
        })?;
        let tert = build_tertiary(&self.base, *tol);
        let cs = tert.constraint_set();
        let canonical = PoissonStructure::canonical(n);
        let big = dirac_tensor(&canonical, &cs, &full.packed(), tol)?;
        let free: Vec<usize> = (0..n).filter(|c| !chart.contains(c)).collect();
        let mut keep: Vec<usize> = (0..n).collect();
        keep.extend(free.iter().map(|&c| n + c));
        Ok(Mat::from_fn(keep.len(), keep.len(), |a, b| {
            big.get(keep[a], keep[b])
        }))
    }

    /// The reduced Hamiltonian vector field ż = ω(z) ∇H'(z) in a frozen
    /// chart, with the gradient taken by central differences of the
    /// substituted Hamiltonian (reconstruction matrices cached per q).
    pub fn vector_field(&self, chart: &[usize]) -> FnField {
        let n = self.base.dim();
        let k = self.momentum_dim();
        let structure = self.structure(chart);
        let rs = self.clone_internal();
        let chart = chart.to_vec();
        let tol = self.tol;
        let recon_cache: Mutex<Option<(Vec<f64>, Arc<Mat>)>> = Mutex::new(None);
        FnField::new(n + k, "reduced-flow", move |z: &[f64]| {
            let omega = structure.tensor(z)?;
            let eval_h = |y: &[f64]| -> Result<f64> {
                let (q, mom) = y.split_at(n);
                if let Some(h) = &rs.hamiltonian_override {
                    return Ok(h(q, mom));
                }
                let b = {
                    let mut guard = recon_cache.lock().expect("recon cache lock");
                    match guard.as_ref() {
                        Some((qc, b)) if qc.as_slice() == q => Arc::clone(b),
                        _ => {
                            let fresh = Arc::new(rs.reconstruction_matrix(&chart, q)?);
                            *guard = Some((q.to_vec(), Arc::clone(&fresh)));
                            fresh
                        }
                    }
                };
                rs.base
                    .canonical_hamiltonian(&FullPhaseState::new(q.to_vec(), b.matvec(mom)))
            };
            let mut grad = vec![0.0; n + k];
            let mut yp = z.to_vec();
            for j in 0..(n + k) {
                let h = tol.fd_step * (1.0 + z[j].abs());
                yp[j] = z[j] + h;
                let fp = eval_h(&yp)?;
                yp[j] = z[j] - h;
                let fm = eval_h(&yp)?;
                yp[j] = z[j];
                grad[j] = (fp - fm) / (2.0 * h);
            }
            Ok(omega.matvec(&grad))
        })
    }

    /// Map a reduced tangent vector (q̇, ṁ_i) to the full (q̇, ṗ_A):
    /// ṗ = (∂_E B q̇^E) m + B ṁ, with ∂B by central differences of the
    /// reconstruction matrix and the momenta block exact.
    pub fn lift_velocity(
        &self,
        state: &ReducedPhaseState,
        zdot: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.base.dim();
        let (qdot, mdot) = zdot.split_at(n);
        let b = self.reconstruction_matrix(&state.chart, &state.q)?;
        let mut pdot = b.matvec(mdot);
        let h = self.tol.fd_step;
        for e in 0..n {
            if qdot[e] == 0.0 {
                continue;
            }
            let step = h * (1.0 + state.q[e].abs());
            let mut qp = state.q.clone();
            qp[e] += step;
            let mut qm = state.q.clone();
            qm[e] -= step;
            let bp = self.reconstruction_matrix(&state.chart, &qp)?;
            let bm = self.reconstruction_matrix(&state.chart, &qm)?;
            let db = bp.sub(&bm).scaled(qdot[e] / (2.0 * step));
            let contrib = db.matvec(&state.momenta);
            for a in 0..n {
                pdot[a] += contrib[a];
            }
        }
        Ok((qdot.to_vec(), pdot))
    }
}

/// Newton projection of a configuration onto the constraint surface along
/// the transpose of the constraint Jacobian.
pub fn project_onto_surface(
    sys: &Arc<ConstrainedSystem>,
    q0: &[f64],
    tol: &Tolerances,
) -> Result<Vec<f64>> {
    let mut q = q0.to_vec();
    for _ in 0..tol.newton_max_iter {
        let g = sys.constraints().values(&q);
        let gnorm = vecops::norm_inf(&g);
        if gnorm <= tol.newton_tol {
            return Ok(q);
        }
        let jac = sys.constraints().jacobian(&q, tol)?;
        let jjt = jac.matmul(&jac.transpose());
        let y = jjt
            .solve(&g)
            .map_err(|_| Error::RankDeficient("surface projection".into()))?;
        let step = jac.tr_matvec(&y);
        for (qa, s) in q.iter_mut().zip(&step) {
            *qa -= s;
        }
    }
    let g = sys.constraints().values(&q);
    let gnorm = vecops::norm_inf(&g);
    if gnorm <= 10.0 * tol.newton_tol {
        Ok(q)
    } else {
        Err(Error::NewtonDiverged {
            iterations: tol.newton_max_iter,
            residual: gnorm,
        })
    }
}

/// Project momenta onto the tertiary surface Φ = 0 (orthogonal in the
/// Euclidean metric of the p-space).
pub fn project_tangent_momenta(
    sys: &Arc<ConstrainedSystem>,
    q: &[f64],
    p: &[f64],
    tol: &Tolerances,
) -> Result<Vec<f64>> {
    let tert = build_tertiary(sys, *tol);
    let w = tert.momentum_jacobian(q)?;
    let wwt = w.matmul(&w.transpose());
    let phi = w.matvec(p);
    let y = wwt
        .solve(&phi)
        .map_err(|_| Error::RankDeficient("tangency projection".into()))?;
    let corr = w.tr_matvec(&y);
    Ok(p.iter().zip(&corr).map(|(pa, c)| pa - c).collect())
}

/// Integrate the reduced Hamiltonian flow with per-sample diagnostics
/// (constraint residual, energy drift, Jacobi spot-check) and automatic
/// re-charting when the pivot minor degrades.
///
/// Samples store the reconstructed canonical state (q, p) so that their
/// meaning does not change across chart switches; re-charts are recorded
/// as trajectory events.
pub fn reduced_flow(
    rs: &ReducedSystem,
    z0: &ReducedPhaseState,
    t_end: f64,
    sample_dt: f64,
    tol: &Tolerances,
) -> Result<Trajectory> {
    if t_end <= 0.0 || sample_dt <= 0.0 {
        return Err(Error::Invalid("t_end and sample_dt must be positive".into()));
    }
    let sys = rs.base();
    let n = sys.dim();
    let q_on = project_onto_surface(sys, &z0.q, tol)?;
    let mut state = ReducedPhaseState {
        q: q_on,
        momenta: z0.momenta.clone(),
        chart: z0.chart.clone(),
    };
    let mut labels: Vec<String> = sys.labels().to_vec();
    labels.extend((1..=n).map(|i| format!("p{i}")));
    let mut traj = Trajectory::new(
        labels,
        vec![
            "constraint_residual".into(),
            "energy_drift".into(),
            "jacobi_residual".into(),
        ],
    );
    let h0 = rs.reduced_hamiltonian(&state)?;
    let mut field = rs.vector_field(&state.chart);
    let mut structure = rs.structure(&state.chart);

    let mut t = 0.0;
    let steps = (t_end / sample_dt).ceil() as usize;
    for step in 0..=steps {
        let g = sys.constraints().values(&state.q);
        let diag = vec![
            vecops::norm_inf(&g),
            (rs.reduced_hamiltonian(&state)? - h0).abs(),
            structure.jacobi_residual(&state.packed())?,
        ];
        traj.push(t, rs.reconstruct(&state)?.packed(), diag);
        if step == steps {
            break;
        }
        let t_next = (t + sample_dt).min(t_end);
        // Chart health at the segment start: hop charts eagerly when a
        // clearly better pivot set exists, and always before the hard
        // conditioning limit.
        let jac = sys.constraints().jacobian(&state.q, tol)?;
        let basis = fundamental_solutions_in_chart(sys.constraints(), &state.q, &state.chart, tol);
        let needs_rechart = match basis {
            Err(_) => true,
            Ok(b) => {
                let badness = b.pivot_condition(&jac);
                let current_quality = chart_quality(&jac, &state.chart);
                let best_quality = fundamental_solutions(sys.constraints(), &state.q, tol)
                    .map(|best| chart_quality(&jac, &best.pivots))
                    .unwrap_or(current_quality);
                badness > RECHART_CONDITION
                    || best_quality > RECHART_IMPROVEMENT * current_quality
            }
        };
        if needs_rechart {
            let full = rs.reconstruct(&state)?;
            let fresh = rs.project(&full)?;
            traj.record_event(
                t,
                format!("re-chart: pivots {:?} -> {:?}", state.chart, fresh.chart),
            );
            state = fresh;
            field = rs.vector_field(&state.chart);
            structure = rs.structure(&state.chart);
        }
        let z_end = rk_drive(&field, &state.packed(), t, t_next, tol, &mut |_, _| {})?;
        state = ReducedPhaseState {
            q: z_end[..n].to_vec(),
            momenta: z_end[n..].to_vec(),
            chart: state.chart.clone(),
        };
        t = t_next;
    }
    Ok(traj)
}

/// Numerical instantiation of the equivalence claim between the reduction
/// routes: at sampled on-shell points the adapted-momenta tensor must match
/// the Dirac tensor of the same coordinate functions, and the reduced
/// Hamiltonian vector fields of the intermediate and Dirac routes must lift
/// to the same full-space velocities.
#[derive(Debug, Clone)]
pub struct AffirmationReport {
    pub samples: usize,
    pub max_tensor_deviation: f64,
    pub max_field_deviation: f64,
    pub tensor_tolerance: f64,
    pub field_tolerance: f64,
    pub failures: Vec<String>,
}

impl AffirmationReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
            && self.max_tensor_deviation <= self.tensor_tolerance
            && self.max_field_deviation <= self.field_tolerance
    }
}

pub fn verify_affirmation(
    sys: &Arc<ConstrainedSystem>,
    samples: &[FullPhaseState],
    tol: &Tolerances,
) -> Result<AffirmationReport> {
    let n = sys.dim();
    let rs_int = reduce_intermediate(sys, *tol);
    let rs_dir = reduce_dirac(sys, *tol);
    let tert = build_tertiary(sys, *tol);
    let cs = tert.constraint_set();
    let canonical = PoissonStructure::canonical(n);
    let mut report = AffirmationReport {
        samples: samples.len(),
        max_tensor_deviation: 0.0,
        max_field_deviation: 0.0,
        tensor_tolerance: 1e-9,
        field_tolerance: 1e-8,
        failures: Vec::new(),
    };
    for (idx, raw) in samples.iter().enumerate() {
        // Exact on-shell data: project the configuration and the momenta.
        let q = project_onto_surface(sys, &raw.q, tol)?;
        let p = project_tangent_momenta(sys, &q, &raw.p, tol)?;
        let full = FullPhaseState::new(q.clone(), p.clone());

        let state_int = rs_int.project(&full)?;
        let chart = state_int.chart.clone();
        let k = state_int.momenta.len();

        // (a) tensors: adapted-momenta brackets vs Dirac brackets of the
        // same functions (q^A, π_i) on the canonical space.
        let omega_int = rs_int
            .structure(&chart)
            .tensor(&state_int.packed())?;
        let big = dirac_tensor(&canonical, &cs, &full.packed(), tol)?;
        // Gradients of the functions (q^A, π_i(q, p)).
        let mut grads: Vec<Vec<f64>> = Vec::with_capacity(n + k);
        for a in 0..n {
            let mut g = vec![0.0; 2 * n];
            g[a] = 1.0;
            grads.push(g);
        }
        let basis = fundamental_solutions_in_chart(sys.constraints(), &q, &chart, tol)?;
        let partials: Vec<Mat> = (0..n)
            .map(|e| basis_partial(sys.constraints(), &q, &chart, e, tol))
            .collect::<Result<_>>()?;
        let m = sys.constraints().count();
        for i in 0..k {
            let mut g = vec![0.0; 2 * n];
            for e in 0..n {
                let mut s = 0.0;
                for a in 0..n {
                    s += partials[e].get(m + i, a) * p[a];
                }
                g[e] = s;
            }
            for a in 0..n {
                g[n + a] = basis.g_lower.get(i, a);
            }
            grads.push(g);
        }
        let mut omega_dirac_fn = Mat::zeros(n + k, n + k);
        for a in 0..(n + k) {
            for b in 0..(n + k) {
                let v = vecops::dot(&grads[a], &big.matvec(&grads[b]));
                omega_dirac_fn.set(a, b, v);
            }
        }
        let tdev = omega_int.sub(&omega_dirac_fn).max_abs();
        report.max_tensor_deviation = report.max_tensor_deviation.max(tdev);
        if tdev > report.tensor_tolerance {
            report
                .failures
                .push(format!("sample {idx}: tensor deviation {tdev:.3e}"));
        }

        // (b) Hamiltonian vector fields lifted to (q̇, ṗ).
        let field_int = rs_int.vector_field(&chart);
        let zdot_int = field_int.eval(&state_int.packed())?;
        let (qdot_i, pdot_i) = rs_int.lift_velocity(&state_int, &zdot_int)?;

        let state_dir = ReducedPhaseState {
            q: q.clone(),
            momenta: basis.free.iter().map(|&c| p[c]).collect(),
            chart: chart.clone(),
        };
        let field_dir = rs_dir.vector_field(&chart);
        let zdot_dir = field_dir.eval(&state_dir.packed())?;
        let (qdot_d, pdot_d) = rs_dir.lift_velocity(&state_dir, &zdot_dir)?;

        let fdev = vecops::max_abs_diff(&qdot_i, &qdot_d)
            .max(vecops::max_abs_diff(&pdot_i, &pdot_d));
        report.max_field_deviation = report.max_field_deviation.max(fdev);
        if fdev > report.field_tolerance {
            report
                .failures
                .push(format!("sample {idx}: field deviation {fdev:.3e}"));
        }
    }
    Ok(report)
}
