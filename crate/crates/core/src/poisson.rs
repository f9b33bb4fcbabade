//! Poisson structures as first-class values: the canonical bracket, the
//! non-canonical brackets built from the constraint-adapted momenta, the
//! Dirac bracket, and the Jacobi / Casimir verifiers.

use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::field::FnField;
use crate::geometry::{basis_workspace, ConstraintSpec};
use crate::numeric::mat::vecops;
use crate::numeric::rk::rk_drive;
use crate::numeric::{fd_gradient, Mat, Tolerances};

/// Provenance tag for an assembled structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StructureKind {
    Canonical,
    Intermediate,
    Dirac,
    Chetaev,
    Custom,
}

type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type GradientFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// A scalar phase-space function with an optional analytic gradient
/// (finite differences otherwise).
#[derive(Clone)]
pub struct PhaseFunction {
    f: ScalarFn,
    grad: Option<GradientFn>,
}

impl PhaseFunction {
    pub fn new(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        PhaseFunction {
            f: Arc::new(f),
            grad: None,
        }
    }

    pub fn with_gradient(
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        grad: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        PhaseFunction {
            f: Arc::new(f),
            grad: Some(Arc::new(grad)),
        }
    }

    /// Coordinate function z ↦ z_i.
    pub fn coordinate(dim: usize, i: usize) -> Self {
        PhaseFunction::with_gradient(
            move |z: &[f64]| z[i],
            move |_z: &[f64]| {
                let mut g = vec![0.0; dim];
                g[i] = 1.0;
                g
            },
        )
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        (self.f)(z)
    }

    pub fn gradient(&self, z: &[f64], tol: &Tolerances) -> Vec<f64> {
        match &self.grad {
            Some(g) => g(z),
            None => fd_gradient(&|x: &[f64]| (self.f)(x), z, tol),
        }
    }
}

type TensorFn = Arc<dyn Fn(&[f64]) -> Result<Mat> + Send + Sync>;

/// A position-dependent antisymmetric bracket tensor over named phase
/// coordinates.
#[derive(Clone)]
pub struct PoissonStructure {
    dim: usize,
    labels: Vec<String>,
    kind: StructureKind,
    tensor: TensorFn,
}

impl PoissonStructure {
    pub fn new(
        labels: Vec<String>,
        kind: StructureKind,
        tensor: impl Fn(&[f64]) -> Result<Mat> + Send + Sync + 'static,
    ) -> Self {
        PoissonStructure {
            dim: labels.len(),
            labels,
            kind,
            tensor: Arc::new(tensor),
        }
    }

    /// Canonical structure over (q^1..q^k, p_1..p_k).
    pub fn canonical(dof: usize) -> Self {
        let mut labels: Vec<String> = (1..=dof).map(|i| format!("q{i}")).collect();
        labels.extend((1..=dof).map(|i| format!("p{i}")));
        PoissonStructure::new(labels, StructureKind::Canonical, move |_z: &[f64]| {
            let mut j = Mat::zeros(2 * dof, 2 * dof);
            for i in 0..dof {
                j.set(i, dof + i, 1.0);
                j.set(dof + i, i, -1.0);
            }
            Ok(j)
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn kind(&self) -> StructureKind {
        self.kind
    }

    pub fn tensor(&self, z: &[f64]) -> Result<Mat> {
        if z.len() != self.dim {
            return Err(Error::Dimension(format!(
                "structure over {} coordinates evaluated at a point of dimension {}",
                self.dim,
                z.len()
            )));
        }
        (self.tensor)(z)
    }

    /// {f, g}(z) = ∇f(z)ᵀ ω(z) ∇g(z).
    pub fn bracket(
        &self,
        f: &PhaseFunction,
        g: &PhaseFunction,
        z: &[f64],
        tol: &Tolerances,
    ) -> Result<f64> {
        let omega = self.tensor(z)?;
        let gf = f.gradient(z, tol);
        let gg = g.gradient(z, tol);
        if gf.len() != self.dim || gg.len() != self.dim {
            return Err(Error::Dimension("gradient dimension mismatch".into()));
        }
        Ok(vecops::dot(&gf, &omega.matvec(&gg)))
    }

    /// The Hamiltonian vector field ż = ω(z) ∇h(z).
    pub fn hamiltonian_field(&self, h: PhaseFunction, tol: Tolerances, label: &str) -> FnField {
        let ps = self.clone();
        FnField::new(self.dim, label, move |z: &[f64]| {
            let omega = ps.tensor(z)?;
            let grad = h.gradient(z, &tol);
            Ok(omega.matvec(&grad))
        })
    }

    /// Max over index triples of the cyclic Jacobi sum
    /// |Σ_l (ω_il ∂_l ω_jk + ω_jl ∂_l ω_ki + ω_kl ∂_l ω_ij)|,
    /// with ∂ taken by fourth-order central differences.
    pub fn jacobi_residual(&self, z: &[f64]) -> Result<f64> {
        let d = self.dim;
        let omega = self.tensor(z)?;
        // Tensor entries come out of linear solves with ~1e-13 noise; the
        // five-point stencil at a wide step keeps both that amplified
        // roundoff and the truncation well under the 1e-8 gate.
        let mut partials = Vec::with_capacity(d);
        let mut zp = z.to_vec();
        for l in 0..d {
            let h = 2e-4 * (1.0 + z[l].abs());
            zp[l] = z[l] + 2.0 * h;
            let wp2 = self.tensor(&zp)?;
            zp[l] = z[l] + h;
            let wp1 = self.tensor(&zp)?;
            zp[l] = z[l] - h;
            let wm1 = self.tensor(&zp)?;
            zp[l] = z[l] - 2.0 * h;
            let wm2 = self.tensor(&zp)?;
            zp[l] = z[l];
            let combo = wp1
                .sub(&wm1)
                .scaled(8.0)
                .sub(&wp2.sub(&wm2))
                .scaled(1.0 / (12.0 * h));
            partials.push(combo);
        }
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in (i + 1)..d {
                for k in (j + 1)..d {
                    let mut s = 0.0;
                    for l in 0..d {
                        s += omega.get(i, l) * partials[l].get(j, k)
                            + omega.get(j, l) * partials[l].get(k, i)
                            + omega.get(k, l) * partials[l].get(i, j);
                    }
                    worst = worst.max(s.abs());
                }
            }
        }
        Ok(worst)
    }
}

/// Second-class constraint functions T_I paired as (G_α, Φ_α).
#[derive(Clone)]
pub struct ConstraintSet {
    functions: Vec<PhaseFunction>,
}

impl ConstraintSet {
    pub fn new(functions: Vec<PhaseFunction>) -> Result<Self> {
        if !functions.len().is_multiple_of(2) {
            return Err(Error::Invalid(
                "second-class constraints come in pairs (G_α, Φ_α)".into(),
            ));
        }
        Ok(ConstraintSet { functions })
    }

    pub fn empty() -> Self {
        ConstraintSet {
            functions: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn functions(&self) -> &[PhaseFunction] {
        &self.functions
    }

    pub fn values(&self, z: &[f64]) -> Vec<f64> {
        self.functions.iter().map(|f| f.eval(z)).collect()
    }
}

const SECOND_CLASS_CONDITION_LIMIT: f64 = 1e10;

/// Dirac bracket {f, g} − {f, T_I} (Δ⁻¹)_IJ {T_J, g} at z.
pub fn dirac_bracket(
    ps: &PoissonStructure,
    cs: &ConstraintSet,
    f: &PhaseFunction,
    g: &PhaseFunction,
    z: &[f64],
    tol: &Tolerances,
) -> Result<f64> {
    let plain = ps.bracket(f, g, z, tol)?;
    if cs.is_empty() {
        return Ok(plain);
    }
    let omega = ps.tensor(z)?;
    let grads: Vec<Vec<f64>> = cs
        .functions()
        .iter()
        .map(|t| t.gradient(z, tol))
        .collect();
    let omega_grads: Vec<Vec<f64>> = grads.iter().map(|gt| omega.matvec(gt)).collect();
    let m = grads.len();
    let delta = Mat::from_fn(m, m, |i, j| vecops::dot(&grads[i], &omega_grads[j]));
    let cond = delta.condition();
    if !cond.is_finite() || cond > SECOND_CLASS_CONDITION_LIMIT {
        return Err(Error::SecondClass(format!(
            "constraint bracket matrix Δ has condition {cond:.3e}"
        )));
    }
    let gf = f.gradient(z, tol);
    let gg = g.gradient(z, tol);
    let f_with_t: Vec<f64> = omega_grads.iter().map(|og| vecops::dot(&gf, og)).collect();
    let t_with_g: Vec<f64> = grads
        .iter()
        .map(|gt| vecops::dot(gt, &omega.matvec(&gg)))
        .collect();
    let x = delta
        .solve(&t_with_g)
        .map_err(|_| Error::SecondClass("Δ is singular".into()))?;
    Ok(plain - vecops::dot(&f_with_t, &x))
}

/// Dirac tensor of the coordinate functions: ω_D = ω − A Δ⁻¹ Aᵀ restricted
/// to coordinates, where A_{aI} = {z^a, T_I}.
pub fn dirac_tensor(
    ps: &PoissonStructure,
    cs: &ConstraintSet,
    z: &[f64],
    tol: &Tolerances,
) -> Result<Mat> {
    let omega = ps.tensor(z)?;
    if cs.is_empty() {
        return Ok(omega);
    }
    let d = ps.dim();
    let grads: Vec<Vec<f64>> = cs
        .functions()
        .iter()
        .map(|t| t.gradient(z, tol))
        .collect();
    let m = grads.len();
    // A_{aI} = (ω ∇T_I)_a.
    let a = {
        let mut a = Mat::zeros(d, m);
        for (i_t, gt) in grads.iter().enumerate() {
            let col = omega.matvec(gt);
            for row in 0..d {
                a.set(row, i_t, col[row]);
            }
        }
        a
    };
    let at = a.transpose();
    let delta = Mat::from_fn(m, m, |i, j| vecops::dot(&grads[i], at.row(j)));
    let cond = delta.condition();
    if !cond.is_finite() || cond > SECOND_CLASS_CONDITION_LIMIT {
        return Err(Error::SecondClass(format!(
            "constraint bracket matrix Δ has condition {cond:.3e}"
        )));
    }
    // {z^a, z^b}_D = ω_ab − A_{aI} (Δ⁻¹)_IJ {T_J, z^b} and {T_J, z^b} = −A_{bJ}.
    let delta_inv = delta
        .inverse()
        .map_err(|_| Error::SecondClass("Δ is singular".into()))?;
    let correction = a.matmul(&delta_inv).matmul(&a.transpose());
    Ok(omega.add(&correction))
}

// Per-configuration pieces of the (q, π) tensor, cached so that momenta
// perturbations (which dominate the finite-difference probes of the Jacobi
// verifier) reuse the basis work.
struct InterParts {
    g_full: Mat,
    g_full_inv: Mat,
    c: crate::geometry::StructureFunctions,
}

fn intermediate_parts(
    spec: &ConstraintSpec,
    pivots: &[usize],
    q: &[f64],
    tol: &Tolerances,
) -> Result<InterParts> {
    let ws = basis_workspace(spec, q, pivots, tol)?;
    let c = ws.structure_functions();
    Ok(InterParts {
        g_full: ws.basis.g_full,
        g_full_inv: ws.basis.g_full_inv,
        c,
    })
}

fn assemble_intermediate(parts: &InterParts, pi: &[f64]) -> Mat {
    let n = pi.len();
    let p = parts.g_full_inv.matvec(pi);
    let pi_pi = parts.c.contract(&p).scaled(-1.0);
    let mut omega = Mat::zeros(2 * n, 2 * n);
    for a in 0..n {
        for b in 0..n {
            let g_ba = parts.g_full.get(b, a);
            omega.set(a, n + b, g_ba);
            omega.set(n + b, a, -g_ba);
            omega.set(n + a, n + b, pi_pi.get(a, b));
        }
    }
    omega
}

/// The (q^A, π_B) bracket tensor of the constraint-adapted momenta over the
/// full 2n-dimensional space: {q, q} = 0, {q^A, π_B} = G_BA,
/// {π_A, π_B} = −[G_A, G_B]^D p_D with p = G̃ π.
pub fn intermediate_tensor(
    spec: &ConstraintSpec,
    pivots: &[usize],
    q: &[f64],
    pi: &[f64],
    tol: &Tolerances,
) -> Result<Mat> {
    let parts = intermediate_parts(spec, pivots, q, tol)?;
    Ok(assemble_intermediate(&parts, pi))
}

/// Package the (q, π) brackets of a constraint surface as a PoissonStructure
/// over 2n coordinates in a frozen chart. The basis work is cached per
/// configuration point.
pub fn intermediate_structure(
    spec: ConstraintSpec,
    pivots: Vec<usize>,
    labels: Vec<String>,
    tol: Tolerances,
) -> PoissonStructure {
    let n = spec.dim();
    let cache: Mutex<Option<(Vec<f64>, Arc<InterParts>)>> = Mutex::new(None);
    PoissonStructure::new(labels, StructureKind::Intermediate, move |z: &[f64]| {
        let (q, pi) = z.split_at(n);
        let parts = {
            let mut guard = cache.lock().expect("tensor cache lock");
            match guard.as_ref() {
                Some((qc, parts)) if qc.as_slice() == q => Arc::clone(parts),
                _ => {
                    let fresh = Arc::new(intermediate_parts(&spec, &pivots, q, &tol)?);
                    *guard = Some((q.to_vec(), Arc::clone(&fresh)));
                    fresh
                }
            }
        };
        Ok(assemble_intermediate(&parts, pi))
    })
}

/// Flow the Hamiltonian field of h and report the worst excursion of the
/// candidate Casimir from its initial value.
pub fn casimir_drift(
    ps: &PoissonStructure,
    casimir: &PhaseFunction,
    h: &PhaseFunction,
    z0: &[f64],
    t_span: (f64, f64),
    tol: &Tolerances,
) -> Result<f64> {
    let field = ps.hamiltonian_field(h.clone(), *tol, "casimir-drift");
    let c0 = casimir.eval(z0);
    let mut worst = 0.0f64;
    let mut cb = |_t: f64, z: &[f64]| {
        worst = worst.max((casimir.eval(z) - c0).abs());
    };
    rk_drive(&field, z0, t_span.0, t_span.1, tol, &mut cb)?;
    Ok(worst)
}
