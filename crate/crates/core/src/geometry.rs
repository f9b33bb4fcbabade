//! Constraint-surface machinery: the constraint Jacobian, the structured
//! null-space basis of tangent fields, the invertible momenta-change matrix
//! built from them, and chart (pivot) management.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numeric::fd::fd_matrix_partial;
use crate::numeric::{fd_jacobian, Mat, Tolerances};

type VecFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
type MatFn = Arc<dyn Fn(&[f64]) -> Mat + Send + Sync>;
type MatListFn = Arc<dyn Fn(&[f64]) -> Vec<Mat> + Send + Sync>;

/// Constraint functions G_α(q) with optional analytic first and second
/// derivatives. Finite differences fill in whatever is not supplied.
#[derive(Clone)]
pub struct ConstraintSpec {
    dim: usize,
    count: usize,
    g: VecFn,
    jac: Option<MatFn>,
    hess: Option<MatListFn>,
}

impl ConstraintSpec {
    pub fn new(
        dim: usize,
        count: usize,
        g: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        ConstraintSpec {
            dim,
            count,
            g: Arc::new(g),
            jac: None,
            hess: None,
        }
    }

    pub fn with_jacobian(mut self, jac: impl Fn(&[f64]) -> Mat + Send + Sync + 'static) -> Self {
        self.jac = Some(Arc::new(jac));
        self
    }

    pub fn with_hessians(
        mut self,
        hess: impl Fn(&[f64]) -> Vec<Mat> + Send + Sync + 'static,
    ) -> Self {
        self.hess = Some(Arc::new(hess));
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of constraints, n - k.
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn surface_dim(&self) -> usize {
        self.dim - self.count
    }

    pub fn values(&self, q: &[f64]) -> Vec<f64> {
        (self.g)(q)
    }

    pub fn has_analytic_hessians(&self) -> bool {
        self.hess.is_some()
    }

    /// G_αA = ∂G_α/∂q^A, shape (n-k) x n.
    pub fn jacobian(&self, q: &[f64], tol: &Tolerances) -> Result<Mat> {
        match &self.jac {
            Some(j) => Ok(j(q)),
            None => {
                let g = self.g.clone();
                fd_jacobian(&move |x: &[f64]| Ok(g(x)), q, tol)
            }
        }
    }

    /// Per-constraint Hessians ∂_A ∂_B G_α, each n x n.
    pub fn hessians(&self, q: &[f64], tol: &Tolerances) -> Result<Vec<Mat>> {
        if let Some(h) = &self.hess {
            return Ok(h(q));
        }
        let mut out = Vec::with_capacity(self.count);
        let mut cols: Vec<Mat> = Vec::with_capacity(self.dim);
        for e in 0..self.dim {
            let dj = fd_matrix_partial(&|x: &[f64]| self.jacobian(x, tol), q, e, tol)?;
            cols.push(dj);
        }
        for alpha in 0..self.count {
            let mut h = Mat::zeros(self.dim, self.dim);
            for a in 0..self.dim {
                for e in 0..self.dim {
                    // Symmetrize the two finite-difference routes.
                    let v = 0.5 * (cols[e].get(alpha, a) + cols[a].get(alpha, e));
                    h.set(a, e, v);
                }
            }
            out.push(h);
        }
        Ok(out)
    }
}

/// The structured tangent basis at a configuration point, together with the
/// full momenta-change matrix and its inverse.
///
/// Row layout of `g_full`: the n-k constraint gradient rows first, then the
/// k tangent rows. Each tangent row carries a unit entry in its own free
/// (non-pivot) column and zeros in the other free columns.
#[derive(Debug, Clone)]
pub struct TangentBasis {
    pub pivots: Vec<usize>,
    pub free: Vec<usize>,
    pub g_lower: Mat,
    pub g_full: Mat,
    pub g_full_inv: Mat,
}

impl TangentBasis {
    /// Conditioning of this chart: largest singular value of the full
    /// Jacobian over the smallest singular value of the pivot minor. Grows
    /// without bound as the pivot block degenerates, even for a single
    /// constraint (where the minor itself is 1x1 and trivially
    /// well-conditioned in isolation).
    pub fn pivot_condition(&self, jac: &Mat) -> f64 {
        chart_badness(jac, &self.pivots)
    }
}

/// Threshold on the pivot-minor conditioning past which a chart is
/// abandoned outright.
pub const RECHART_CONDITION: f64 = 1e6;

/// Ratio threshold for eagerly hopping to a clearly better chart before
/// the hard limit is reached. Kept small: the reduced momenta scale like
/// the inverse pivot minor, and a segment that starts in a marginal chart
/// can cross its degeneracy before the next health check.
pub const RECHART_IMPROVEMENT: f64 = 3.0;

/// σ_max(jacobian) / σ_min(pivot minor).
pub fn chart_badness(jac: &Mat, pivots: &[usize]) -> f64 {
    let m = jac.rows();
    let minor = Mat::from_fn(m, m, |a, b| jac.get(a, pivots[b]));
    let top = jac
        .matmul(&jac.transpose())
        .eigenvalues_symmetric()
        .map(|e| e.last().copied().unwrap_or(0.0))
        .unwrap_or(f64::INFINITY)
        .max(0.0)
        .sqrt();
    let bottom = minor
        .transpose()
        .matmul(&minor)
        .eigenvalues_symmetric()
        .map(|e| e.first().copied().unwrap_or(0.0))
        .unwrap_or(0.0)
        .max(0.0)
        .sqrt();
    if bottom == 0.0 {
        f64::INFINITY
    } else {
        top / bottom
    }
}

/// |det| of the pivot minor, the quality score maximized by the
/// largest-pivot selection rule.
pub fn chart_quality(jac: &Mat, pivots: &[usize]) -> f64 {
    let m = jac.rows();
    Mat::from_fn(m, m, |a, b| jac.get(a, pivots[b])).det().abs()
}

fn select_pivots(jac: &Mat) -> Result<Vec<usize>> {
    let m = jac.rows();
    let n = jac.cols();
    let mut work = jac.clone();
    let mut used = vec![false; n];
    let mut pivots = Vec::with_capacity(m);
    let scale = jac.max_abs().max(1e-300);
    for row in 0..m {
        let mut best_col = None;
        let mut best = 0.0;
        for col in 0..n {
            if used[col] {
                continue;
            }
            let v = work.get(row, col).abs();
            if v > best {
                best = v;
                best_col = Some(col);
            }
        }
        let col = best_col.ok_or_else(|| Error::RankDeficient("empty constraint row".into()))?;
        if best < 1e-10 * scale {
            return Err(Error::RankDeficient(format!(
                "constraint Jacobian row {row} has no usable pivot (best {best:.3e})"
            )));
        }
        used[col] = true;
        pivots.push(col);
        for r in (row + 1)..m {
            let factor = work.get(r, col) / work.get(row, col);
            for c in 0..n {
                let v = work.get(r, c) - factor * work.get(row, c);
                work.set(r, c, v);
            }
        }
    }
    pivots.sort_unstable();
    Ok(pivots)
}

fn assemble(jac: &Mat, pivots: &[usize], q: &[f64]) -> Result<TangentBasis> {
    let m = jac.rows();
    let n = jac.cols();
    let free: Vec<usize> = (0..n).filter(|c| !pivots.contains(c)).collect();
    let k = free.len();
    let minor = Mat::from_fn(m, m, |a, b| jac.get(a, pivots[b]));
    let mut g_lower = Mat::zeros(k, n);
    for (i, &fcol) in free.iter().enumerate() {
        let rhs: Vec<f64> = (0..m).map(|a| -jac.get(a, fcol)).collect();
        let solved = minor.solve(&rhs).map_err(|_| Error::Chart {
            q: q.to_vec(),
            reason: format!("pivot minor singular for columns {pivots:?}"),
        })?;
        for (b, &pcol) in pivots.iter().enumerate() {
            g_lower.set(i, pcol, solved[b]);
        }
        g_lower.set(i, fcol, 1.0);
    }
    let mut g_full = Mat::zeros(n, n);
    for a in 0..m {
        for c in 0..n {
            g_full.set(a, c, jac.get(a, c));
        }
    }
    for i in 0..k {
        for c in 0..n {
            g_full.set(m + i, c, g_lower.get(i, c));
        }
    }
    let g_full_inv = g_full.inverse().map_err(|_| Error::Chart {
        q: q.to_vec(),
        reason: "momenta-change matrix not invertible".into(),
    })?;
    Ok(TangentBasis {
        pivots: pivots.to_vec(),
        free,
        g_lower,
        g_full,
        g_full_inv,
    })
}

/// Build the tangent basis at q, selecting pivot columns by column-pivoted
/// elimination (largest-pivot rule).
pub fn fundamental_solutions(
    spec: &ConstraintSpec,
    q: &[f64],
    tol: &Tolerances,
) -> Result<TangentBasis> {
    let jac = spec.jacobian(q, tol)?;
    let pivots = select_pivots(&jac).map_err(|e| Error::Chart {
        q: q.to_vec(),
        reason: e.to_string(),
    })?;
    assemble(&jac, &pivots, q)
}

/// Build the tangent basis at q in a frozen chart (fixed pivot columns).
pub fn fundamental_solutions_in_chart(
    spec: &ConstraintSpec,
    q: &[f64],
    pivots: &[usize],
    tol: &Tolerances,
) -> Result<TangentBasis> {
    let jac = spec.jacobian(q, tol)?;
    assemble(&jac, pivots, q)
}

/// ∂_E of the momenta-change matrix in a frozen chart.
///
/// Uses the analytic Hessians when the spec supplies them (the tangent rows
/// are differentiated through the pivot-minor solve), otherwise central
/// differences of the basis field.
pub fn basis_partial(
    spec: &ConstraintSpec,
    q: &[f64],
    pivots: &[usize],
    e: usize,
    tol: &Tolerances,
) -> Result<Mat> {
    let n = spec.dim();
    let m = spec.count();
    if !spec.has_analytic_hessians() {
        return fd_matrix_partial(
            &|x: &[f64]| Ok(fundamental_solutions_in_chart(spec, x, pivots, tol)?.g_full),
            q,
            e,
            tol,
        );
    }
    let jac = spec.jacobian(q, tol)?;
    let hess = spec.hessians(q, tol)?;
    let basis = fundamental_solutions_in_chart(spec, q, pivots, tol)?;
    let minor = Mat::from_fn(m, m, |a, b| jac.get(a, pivots[b]));
    let mut out = Mat::zeros(n, n);
    // Constraint rows: ∂_E G_αA is the Hessian entry.
    for alpha in 0..m {
        for a in 0..n {
            out.set(alpha, a, hess[alpha].get(a, e));
        }
    }
    // Tangent rows: differentiate the solved pivot entries.
    let d_minor = Mat::from_fn(m, m, |a, b| hess[a].get(pivots[b], e));
    for (i, &fcol) in basis.free.iter().enumerate() {
        let x: Vec<f64> = pivots.iter().map(|&p| basis.g_lower.get(i, p)).collect();
        let mut rhs = d_minor.matvec(&x);
        for (a, r) in rhs.iter_mut().enumerate() {
            *r += hess[a].get(fcol, e);
            *r = -*r;
        }
        let dx = minor.solve(&rhs).map_err(|_| Error::Chart {
            q: q.to_vec(),
            reason: "pivot minor singular while differentiating the basis".into(),
        })?;
        for (b, &pcol) in pivots.iter().enumerate() {
            out.set(m + i, pcol, dx[b]);
        }
        // Unit and zero entries of the structured rows are constant.
    }
    Ok(out)
}

/// Basis, constraint derivatives and all coordinate partials of the
/// momenta-change matrix at one configuration point, computed in a single
/// pass. The tensor assemblies evaluate this once per point instead of
/// re-deriving the basis for every partial.
pub struct BasisWorkspace {
    pub basis: TangentBasis,
    pub jacobian: Mat,
    /// ∂_E g_full for E = 0..n.
    pub partials: Vec<Mat>,
}

pub fn basis_workspace(
    spec: &ConstraintSpec,
    q: &[f64],
    pivots: &[usize],
    tol: &Tolerances,
) -> Result<BasisWorkspace> {
    let n = spec.dim();
    let m = spec.count();
    let jac = spec.jacobian(q, tol)?;
    let basis = assemble(&jac, pivots, q)?;
    if !spec.has_analytic_hessians() {
        let partials = (0..n)
            .map(|e| {
                fd_matrix_partial(
                    &|x: &[f64]| {
                        Ok(fundamental_solutions_in_chart(spec, x, pivots, tol)?.g_full)
                    },
                    q,
                    e,
                    tol,
                )
            })
            .collect::<Result<_>>()?;
        return Ok(BasisWorkspace {
            basis,
            jacobian: jac,
            partials,
        });
    }
    let hess = spec.hessians(q, tol)?;
    let minor = Mat::from_fn(m, m, |a, b| jac.get(a, pivots[b]));
    let mut partials = Vec::with_capacity(n);
    for e in 0..n {
        let mut out = Mat::zeros(n, n);
        for alpha in 0..m {
            for a in 0..n {
                out.set(alpha, a, hess[alpha].get(a, e));
            }
        }
        let d_minor = Mat::from_fn(m, m, |a, b| hess[a].get(pivots[b], e));
        for (i, &fcol) in basis.free.iter().enumerate() {
            let x: Vec<f64> = pivots.iter().map(|&p| basis.g_lower.get(i, p)).collect();
            let mut rhs = d_minor.matvec(&x);
            for (a, r) in rhs.iter_mut().enumerate() {
                *r += hess[a].get(fcol, e);
                *r = -*r;
            }
            let dx = minor.solve(&rhs).map_err(|_| Error::Chart {
                q: q.to_vec(),
                reason: "pivot minor singular while differentiating the basis".into(),
            })?;
            for (b, &pcol) in pivots.iter().enumerate() {
                out.set(m + i, pcol, dx[b]);
            }
        }
        partials.push(out);
    }
    Ok(BasisWorkspace {
        basis,
        jacobian: jac,
        partials,
    })
}

impl BasisWorkspace {
    /// Structure functions assembled from the precomputed partials.
    pub fn structure_functions(&self) -> StructureFunctions {
        let n = self.basis.g_full.rows();
        let mut per_component = vec![Mat::zeros(n, n); n];
        for a in 0..n {
            for b in (a + 1)..n {
                for d in 0..n {
                    let mut v = 0.0;
                    for e in 0..n {
                        v += self.basis.g_full.get(a, e) * self.partials[e].get(b, d)
                            - self.basis.g_full.get(b, e) * self.partials[e].get(a, d);
                    }
                    per_component[d].set(a, b, v);
                    per_component[d].set(b, a, -v);
                }
            }
        }
        StructureFunctions { per_component }
    }
}

/// Coordinate components of the Lie brackets of the basis row fields:
/// c\[D\](A, B) = Σ_E (G_AE ∂_E G_BD − G_BE ∂_E G_AD), antisymmetric in (A, B).
pub struct StructureFunctions {
    /// Indexed by the vector component D; each matrix is over (A, B).
    pub per_component: Vec<Mat>,
}

impl StructureFunctions {
    /// Contraction Σ_D c_AB^D w_D as a matrix over (A, B).
    pub fn contract(&self, w: &[f64]) -> Mat {
        let n = self.per_component.len();
        let mut out = Mat::zeros(n, n);
        for (d, c) in self.per_component.iter().enumerate() {
            let wd = w[d];
            if wd == 0.0 {
                continue;
            }
            for a in 0..n {
                for b in 0..n {
                    out.add_to(a, b, c.get(a, b) * wd);
                }
            }
        }
        out
    }
}

pub fn structure_functions(
    spec: &ConstraintSpec,
    q: &[f64],
    pivots: &[usize],
    tol: &Tolerances,
) -> Result<StructureFunctions> {
    Ok(basis_workspace(spec, q, pivots, tol)?.structure_functions())
}
