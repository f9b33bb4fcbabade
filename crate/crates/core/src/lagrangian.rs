//! Natural Lagrangians L = ½ q̇ᵀM(q)q̇ − U(q) with holonomic constraints:
//! the Legendre maps, the canonical Hamiltonian, and the second-order
//! Lagrange-multiplier equations.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field::FnField;
use crate::geometry::ConstraintSpec;
use crate::numeric::fd::fd_matrix_partial;
use crate::numeric::{fd_gradient, Mat, Tolerances};

/// Full canonical phase-space point (q^A, p_B).
#[derive(Debug, Clone)]
pub struct FullPhaseState {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

impl FullPhaseState {
    pub fn new(q: Vec<f64>, p: Vec<f64>) -> Self {
        FullPhaseState { q, p }
    }

    pub fn packed(&self) -> Vec<f64> {
        let mut z = self.q.clone();
        z.extend_from_slice(&self.p);
        z
    }

    pub fn unpack(z: &[f64]) -> Self {
        let n = z.len() / 2;
        FullPhaseState {
            q: z[..n].to_vec(),
            p: z[n..].to_vec(),
        }
    }
}

/// Multiplier values and constraint residuals reported alongside the
/// second-order equations. λ is algebraically determined and never fed
/// back as a state variable.
#[derive(Debug, Clone)]
pub struct LagrangeMultiplierDiagnostics {
    pub lambda: Vec<f64>,
    pub constraint_violation: f64,
    pub velocity_tangency_violation: f64,
}

type MassFn = Arc<dyn Fn(&[f64]) -> Mat + Send + Sync>;
type MassPartialFn = Arc<dyn Fn(&[f64], usize) -> Mat + Send + Sync>;
type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type GradFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// A natural Lagrangian plus its constraint surface.
#[derive(Clone)]
pub struct ConstrainedSystem {
    n: usize,
    k: usize,
    labels: Vec<String>,
    mass: MassFn,
    mass_partial: Option<MassPartialFn>,
    potential: ScalarFn,
    potential_grad: Option<GradFn>,
    constraints: ConstraintSpec,
}

impl ConstrainedSystem {
    pub fn new(
        labels: Vec<String>,
        mass: impl Fn(&[f64]) -> Mat + Send + Sync + 'static,
        potential: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        constraints: ConstraintSpec,
    ) -> Result<Self> {
        let n = labels.len();
        let count = constraints.count();
        if constraints.dim() != n {
            return Err(Error::Dimension(format!(
                "constraints over {} coordinates in an {}-coordinate system",
                constraints.dim(),
                n
            )));
        }
        if count == 0 || count >= n {
            return Err(Error::Invalid(format!(
                "need 1 <= n-k < n, got {count} constraints for n = {n}"
            )));
        }
        Ok(ConstrainedSystem {
            n,
            k: n - count,
            labels,
            mass: Arc::new(mass),
            mass_partial: None,
            potential: Arc::new(potential),
            potential_grad: None,
            constraints,
        })
    }

    pub fn with_mass_partials(
        mut self,
        partial: impl Fn(&[f64], usize) -> Mat + Send + Sync + 'static,
    ) -> Self {
        self.mass_partial = Some(Arc::new(partial));
        self
    }

    pub fn with_potential_gradient(
        mut self,
        grad: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        self.potential_grad = Some(Arc::new(grad));
        self
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Dimension of the constraint surface.
    pub fn surface_dim(&self) -> usize {
        self.k
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn constraints(&self) -> &ConstraintSpec {
        &self.constraints
    }

    pub fn mass_matrix(&self, q: &[f64]) -> Mat {
        (self.mass)(q)
    }

    /// Inverse mass matrix; Cholesky doubles as the lazy
    /// positive-definiteness check.
    pub fn mass_inverse(&self, q: &[f64]) -> Result<Mat> {
        let m = self.mass_matrix(q);
        m.cholesky()
            .map_err(|_| Error::NotPositiveDefinite("mass matrix".into()))?;
        m.inverse()
    }

    pub fn mass_partial(&self, q: &[f64], e: usize, tol: &Tolerances) -> Result<Mat> {
        match &self.mass_partial {
            Some(p) => Ok(p(q, e)),
            None => fd_matrix_partial(&|x: &[f64]| Ok(self.mass_matrix(x)), q, e, tol),
        }
    }

    pub fn potential(&self, q: &[f64]) -> f64 {
        (self.potential)(q)
    }

    pub fn potential_gradient(&self, q: &[f64], tol: &Tolerances) -> Vec<f64> {
        match &self.potential_grad {
            Some(g) => g(q),
            None => fd_gradient(&|x: &[f64]| self.potential(x), q, tol),
        }
    }

    pub fn has_analytic_derivatives(&self) -> bool {
        self.mass_partial.is_some()
            && self.potential_grad.is_some()
            && self.constraints.has_analytic_hessians()
    }

    /// v^A(q, p) = M̃^AB p_B.
    pub fn legendre_velocity(&self, state: &FullPhaseState) -> Result<Vec<f64>> {
        let m = self.mass_matrix(&state.q);
        m.cholesky()
            .map_err(|_| Error::NotPositiveDefinite("mass matrix".into()))?;
        m.solve(&state.p)
    }

    /// p_A = M_AB q̇^B.
    pub fn legendre_momentum(&self, q: &[f64], qdot: &[f64]) -> Vec<f64> {
        self.mass_matrix(q).matvec(qdot)
    }

    /// H_0 = ½ pᵀ M̃(q) p + U(q).
    pub fn canonical_hamiltonian(&self, state: &FullPhaseState) -> Result<f64> {
        let v = self.legendre_velocity(state)?;
        let kinetic = 0.5 * state.p.iter().zip(&v).map(|(p, v)| p * v).sum::<f64>();
        Ok(kinetic + self.potential(&state.q))
    }

    /// Energy in configuration-velocity variables.
    pub fn energy(&self, q: &[f64], qdot: &[f64]) -> f64 {
        let mv = self.mass_matrix(q).matvec(qdot);
        0.5 * qdot.iter().zip(&mv).map(|(a, b)| a * b).sum::<f64>() + self.potential(q)
    }

    /// Unconstrained acceleration K^A of the natural Lagrangian:
    /// K = M̃ [ −(∂_C M · q̇) q̇^C + ½ q̇ᵀ(∂_B M)q̇ − ∂_B U ].
    pub fn unconstrained_acceleration(
        &self,
        q: &[f64],
        qdot: &[f64],
        tol: &Tolerances,
    ) -> Result<Vec<f64>> {
        let n = self.n;
        let mut rhs = vec![0.0; n];
        let du = self.potential_gradient(q, tol);
        for c in 0..n {
            let dm = self.mass_partial(q, c, tol)?;
            if dm.max_abs() == 0.0 {
                continue;
            }
            let dmv = dm.matvec(qdot);
            for b in 0..n {
                rhs[b] -= qdot[c] * dmv[b];
            }
            // ½ q̇ᵀ(∂_c M)q̇ contributes to the component B = c.
            let quad: f64 = qdot.iter().zip(&dmv).map(|(a, b)| a * b).sum();
            rhs[c] += 0.5 * quad;
        }
        for b in 0..n {
            rhs[b] -= du[b];
        }
        let m = self.mass_matrix(q);
        m.solve(&rhs)
    }

    /// Second-order equations with the multipliers eliminated: returns q̈
    /// and the multiplier diagnostics.
    pub fn multiplier_ode_rhs(
        &self,
        q: &[f64],
        qdot: &[f64],
        tol: &Tolerances,
    ) -> Result<(Vec<f64>, LagrangeMultiplierDiagnostics)> {
        let m = self.count_constraints();
        let kvec = self.unconstrained_acceleration(q, qdot, tol)?;
        let jac = self.constraints.jacobian(q, tol)?;
        let minv = self.mass_inverse(q)?;
        // C_{αβ} = G_α M̃ G_βᵀ; positive-definite M keeps it invertible.
        let gm = jac.matmul(&minv);
        let c = gm.matmul(&jac.transpose());
        let hess = self.constraints.hessians(q, tol)?;
        let mut rhs = vec![0.0; m];
        for alpha in 0..m {
            let gk: f64 = jac.row(alpha).iter().zip(&kvec).map(|(a, b)| a * b).sum();
            let hq = hess[alpha].matvec(qdot);
            let quad: f64 = qdot.iter().zip(&hq).map(|(a, b)| a * b).sum();
            rhs[alpha] = gk + quad;
        }
        let lambda = c
            .solve(&rhs)
            .map_err(|_| Error::Reduction("multiplier matrix C is singular".into()))?;
        let pull = minv.matvec(&jac.tr_matvec(&lambda));
        let qddot: Vec<f64> = kvec.iter().zip(&pull).map(|(k, p)| k - p).collect();

        let gvals = self.constraints.values(q);
        let gdot = jac.matvec(qdot);
        let diag = LagrangeMultiplierDiagnostics {
            lambda,
            constraint_violation: gvals.iter().fold(0.0, |m, v| m.max(v.abs())),
            velocity_tangency_violation: gdot.iter().fold(0.0, |m, v| m.max(v.abs())),
        };
        Ok((qddot, diag))
    }

    fn count_constraints(&self) -> usize {
        self.constraints.count()
    }

    /// First-order field over (q, q̇) realizing the multiplier equations.
    pub fn multiplier_field(self: &Arc<Self>, tol: Tolerances) -> FnField {
        let sys = Arc::clone(self);
        let n = self.n;
        FnField::new(2 * n, "multiplier-ode", move |z: &[f64]| {
            let (q, qdot) = z.split_at(n);
            let (qddot, _) = sys.multiplier_ode_rhs(q, qdot, &tol)?;
            let mut out = qdot.to_vec();
            out.extend(qddot);
            Ok(out)
        })
    }
}
