//! The freely spinning body: a 9-coordinate constrained system over the
//! rotation matrix entries, its reduction to (R, M), the two bracket
//! structures behind the Euler-Poisson equations, and the series solution.
//!
//! Phase ordering is fixed throughout: z = (R11, R12, R13, R21, ..., R33,
//! M1, M2, M3), row-major R first, then the body-frame angular momentum.

use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::field::{FnField, QuadraticField};
use crate::geometry::ConstraintSpec;
use crate::lagrangian::{ConstrainedSystem, FullPhaseState};
use crate::lie::lie_solve;
use crate::numeric::mat::vecops;
use crate::numeric::rk::rk_drive;
use crate::numeric::{Mat, Tolerances};
use crate::poisson::{PoissonStructure, StructureKind};
use crate::traj::Trajectory;

#[inline]
pub fn eps(i: usize, j: usize, k: usize) -> f64 {
    match (i, j, k) {
        (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1.0,
        (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -1.0,
        _ => 0.0,
    }
}

fn cross(a: &[f64], b: &[f64]) -> Vec<f64> {
    vec![
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Initial mass distribution: explicit particles or a mass matrix.
pub enum BodyDescription {
    Particles(Vec<(f64, [f64; 3])>),
    MassMatrix(Mat),
}

/// Mass matrix g and inertia tensor I, I_ij = g_kk δ_ij − g_ij. Built-in
/// constructors deliver the principal (diagonal) frame; a rotated frame
/// keeps both tensors full symmetric.
#[derive(Debug, Clone)]
pub struct InertiaData {
    pub g: Mat,
    pub inertia: Mat,
}

impl InertiaData {
    fn from_g(g: Mat) -> Result<Self> {
        let trace: f64 = (0..3).map(|i| g.get(i, i)).sum();
        let inertia = Mat::from_fn(3, 3, |i, j| {
            if i == j {
                trace - g.get(i, j)
            } else {
                -g.get(i, j)
            }
        });
        Ok(InertiaData { g, inertia })
    }

    /// Diagonal-frame constructor from the three principal g values.
    pub fn from_g_diag(g: [f64; 3]) -> Result<Self> {
        if g.iter().any(|&v| v <= 0.0) {
            return Err(Error::Planarity(format!(
                "mass-matrix eigenvalues must be positive for a non-planar body, got {g:?}"
            )));
        }
        InertiaData::from_g(Mat::diag(&g))
    }

    /// Diagonal-frame constructor from principal moments of inertia, using
    /// 2g_1 = I_2 + I_3 − I_1 and cyclic. Equality in a triangle relation
    /// (one g_i = 0) describes a planar body: fine for the reduced (R, M)
    /// dynamics, rejected by the routes that need the full mass matrix.
    pub fn from_principal_inertia(i: [f64; 3]) -> Result<Self> {
        if i.iter().any(|&v| v <= 0.0) {
            return Err(Error::Invalid(format!(
                "principal moments must be positive, got {i:?}"
            )));
        }
        let g = [
            0.5 * (i[1] + i[2] - i[0]),
            0.5 * (i[0] + i[2] - i[1]),
            0.5 * (i[0] + i[1] - i[2]),
        ];
        if g.iter().any(|&v| v < 0.0) {
            return Err(Error::Invalid(format!(
                "moments {i:?} violate the triangle relations"
            )));
        }
        InertiaData::from_g(Mat::diag(&g))
    }

    /// Strict non-planarity: every principal g positive, as required by the
    /// 9-coordinate Lagrangian representation.
    pub fn is_non_planar(&self) -> bool {
        self.g_diag().iter().all(|&v| v > 0.0)
    }

    pub fn g_diag(&self) -> [f64; 3] {
        [self.g.get(0, 0), self.g.get(1, 1), self.g.get(2, 2)]
    }

    pub fn inertia_diag(&self) -> [f64; 3] {
        [
            self.inertia.get(0, 0),
            self.inertia.get(1, 1),
            self.inertia.get(2, 2),
        ]
    }

    pub fn is_diagonal_frame(&self) -> bool {
        let scale = 1.0 + self.g.max_abs();
        (0..3).all(|i| (0..3).all(|j| i == j || self.g.get(i, j).abs() < 1e-12 * scale))
    }

    /// Express both tensors in a frame rotated by O (columns orthonormal).
    pub fn rotated(&self, o: &Mat) -> InertiaData {
        let g = o.transpose().matmul(&self.g).matmul(o);
        let inertia = o.transpose().matmul(&self.inertia).matmul(o);
        InertiaData { g, inertia }
    }
}

/// g_ij = Σ_N m_N x_N^i x_N^j, diagonalized into the principal frame.
pub fn mass_matrix_from_particles(body: &BodyDescription) -> Result<InertiaData> {
    let g_lab = match body {
        BodyDescription::MassMatrix(g) => g.clone(),
        BodyDescription::Particles(parts) => {
            if parts.iter().any(|(m, _)| *m <= 0.0) {
                return Err(Error::Invalid("particle masses must be positive".into()));
            }
            Mat::from_fn(3, 3, |i, j| {
                parts.iter().map(|(m, x)| m * x[i] * x[j]).sum()
            })
        }
    };
    let (eig, _vecs) = g_lab.eigen_symmetric()?;
    let scale = eig.last().copied().unwrap_or(0.0).max(1e-300);
    if eig[0] <= 1e-12 * scale {
        return Err(Error::Planarity(format!(
            "mass distribution is planar or degenerate (eigenvalues {eig:?})"
        )));
    }
    // Laboratory axes are re-chosen along the inertia axes at t = 0.
    InertiaData::from_g_diag([eig[0], eig[1], eig[2]])
}

/// Rotational state: coordinates R and body-frame angular momentum M.
#[derive(Debug, Clone)]
pub struct BodyState {
    pub r: Mat,
    pub m: Vec<f64>,
}

impl BodyState {
    pub fn packed(&self) -> Vec<f64> {
        let mut z = self.r.data().to_vec();
        z.extend_from_slice(&self.m);
        z
    }

    pub fn unpack(z: &[f64]) -> Self {
        BodyState {
            r: Mat::from_fn(3, 3, |i, j| z[3 * i + j]),
            m: z[9..12].to_vec(),
        }
    }

    pub fn orthogonality_residual(&self) -> f64 {
        self.r
            .transpose()
            .matmul(&self.r)
            .sub(&Mat::identity(3))
            .max_abs()
    }
}

/// Split ℙ = 2R⁻¹p into the symmetric part S and the angular momentum
/// vector M: S = R⁻¹p + (R⁻¹p)ᵀ, M_k = −ε_kij (R⁻¹p)_ij.
pub fn momentum_split(r: &Mat, p: &Mat) -> Result<(Mat, Vec<f64>)> {
    let rinv = r
        .inverse()
        .map_err(|_| Error::Singular("momentum split at non-invertible R".into()))?;
    let rp = rinv.matmul(p);
    let s = rp.add(&rp.transpose());
    let m = vec![
        -(rp.get(1, 2) - rp.get(2, 1)),
        -(rp.get(2, 0) - rp.get(0, 2)),
        -(rp.get(0, 1) - rp.get(1, 0)),
    ];
    Ok((s, m))
}

/// Inverse of the split: p = ½ R (S − ε·M).
pub fn momentum_join(r: &Mat, s: &Mat, m: &[f64]) -> Mat {
    let p_big = Mat::from_fn(3, 3, |i, j| {
        s.get(i, j) - (0..3).map(|k| eps(i, j, k) * m[k]).sum::<f64>()
    });
    r.matmul(&p_big).scaled(0.5)
}

/// Resolution of the tertiary constraints in the diagonal frame:
/// S_ij = ((g_i − g_j)/(g_i + g_j)) ε_ijk M_k, no summation over i, j.
pub fn resolve_s(inertia: &InertiaData, m: &[f64]) -> Result<Mat> {
    if !inertia.is_diagonal_frame() {
        return Err(Error::Invalid(
            "resolve_s requires the principal (diagonal) frame".into(),
        ));
    }
    let g = inertia.g_diag();
    Ok(Mat::from_fn(3, 3, |i, j| {
        if i == j {
            0.0
        } else {
            let k = 3 - i - j;
            (g[i] - g[j]) / (g[i] + g[j]) * eps(i, j, k) * m[k]
        }
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BodyStructureKind {
    /// Brackets valid for arbitrary invertible R, carrying (RᵀR)⁻¹ factors.
    Full,
    /// The simpler brackets valid on the orthogonality surface.
    Chetaev,
}

/// The 12x12 bracket tensor over (R, M).
pub fn rigid_body_structure(kind: BodyStructureKind) -> PoissonStructure {
    let mut labels: Vec<String> = Vec::with_capacity(12);
    for i in 1..=3 {
        for j in 1..=3 {
            labels.push(format!("R{i}{j}"));
        }
    }
    labels.extend((1..=3).map(|k| format!("M{k}")));
    let structure_kind = match kind {
        BodyStructureKind::Full => StructureKind::Custom,
        BodyStructureKind::Chetaev => StructureKind::Chetaev,
    };
    PoissonStructure::new(labels, structure_kind, move |z: &[f64]| {
        let state = BodyState::unpack(z);
        let m = &state.m;
        let mut omega = Mat::zeros(12, 12);
        let (mm_vec, r_factor) = match kind {
            BodyStructureKind::Chetaev => (m.clone(), state.r.clone()),
            BodyStructureKind::Full => {
                let rtr = state.r.transpose().matmul(&state.r);
                let rtr_inv = rtr
                    .inverse()
                    .map_err(|_| Error::Singular("(RᵀR)⁻¹ in the full brackets".into()))?;
                let rinv_t = state
                    .r
                    .inverse()
                    .map_err(|_| Error::Singular("R⁻¹ in the full brackets".into()))?
                    .transpose();
                (rtr_inv.matvec(m), rinv_t)
            }
        };
        // {M_i, M_j} = −ε_ijk w_k with w = (RᵀR)⁻¹M (or M itself).
        for i in 0..3 {
            for j in 0..3 {
                let v: f64 = -(0..3).map(|k| eps(i, j, k) * mm_vec[k]).sum::<f64>();
                omega.set(9 + i, 9 + j, v);
            }
        }
        // {M_i, R_jk} = −ε_ikm F_jm with F = R⁻¹ᵀ (or R).
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    let v: f64 = -(0..3)
                        .map(|mm| eps(i, k, mm) * r_factor.get(j, mm))
                        .sum::<f64>();
                    omega.set(9 + i, 3 * j + k, v);
                    omega.set(3 * j + k, 9 + i, -v);
                }
            }
        }
        Ok(omega)
    })
}

/// Ω = I⁻¹M, Ṙ_ij = −ε_jkm Ω_k R_im, Ṁ = [M, Ω].
pub fn euler_poisson_rhs(inertia: &InertiaData, state: &BodyState) -> Result<(Mat, Vec<f64>)> {
    let omega = inertia.inertia.solve(&state.m)?;
    let rdot = Mat::from_fn(3, 3, |i, j| {
        let mut v = 0.0;
        for k in 0..3 {
            for m in 0..3 {
                v -= eps(j, k, m) * omega[k] * state.r.get(i, m);
            }
        }
        v
    });
    let mdot = cross(&state.m, &omega);
    Ok((rdot, mdot))
}

/// H_0 = ½ M I⁻¹ M; accepts a full symmetric inertia tensor.
pub fn hamiltonian_body(inertia: &InertiaData, state: &BodyState) -> Result<f64> {
    let iom = inertia.inertia.solve(&state.m)?;
    Ok(0.5 * vecops::dot(&state.m, &iom))
}

/// The same energy through the momentum split:
/// H_0 = ⅛ Σ_ij (1/g_j) (S_ij − ε_ijk M_k)², diagonal frame.
pub fn hamiltonian_body_via_split(inertia: &InertiaData, s: &Mat, m: &[f64]) -> Result<f64> {
    if !inertia.is_diagonal_frame() {
        return Err(Error::Invalid(
            "split Hamiltonian needs the diagonal frame".into(),
        ));
    }
    let g = inertia.g_diag();
    let mut h = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let pij = s.get(i, j) - (0..3).map(|k| eps(i, j, k) * m[k]).sum::<f64>();
            h += pij * pij / g[j];
        }
    }
    Ok(0.125 * h)
}

/// The Euler-Poisson right-hand side as an exact quadratic field over
/// (R, M); powers the high-order series integration.
pub fn euler_poisson_field(inertia: &InertiaData) -> Result<QuadraticField> {
    let iinv = inertia.inertia.inverse()?;
    let mut quad: Vec<Mat> = (0..12).map(|_| Mat::zeros(12, 12)).collect();
    // Ṙ_ij = −ε_jkm Ω_k R_im, Ω_k = Σ_l I⁻¹_kl M_l.
    for i in 0..3 {
        for j in 0..3 {
            let target = &mut quad[3 * i + j];
            for k in 0..3 {
                for m in 0..3 {
                    let e = eps(j, k, m);
                    if e == 0.0 {
                        continue;
                    }
                    for l in 0..3 {
                        target.add_to(9 + l, 3 * i + m, -e * iinv.get(k, l));
                    }
                }
            }
        }
    }
    // Ṁ_k = ε_kab M_a Ω_b = Σ ε_kab I⁻¹_bl M_a M_l.
    for k in 0..3 {
        let target = &mut quad[9 + k];
        for a in 0..3 {
            for b in 0..3 {
                let e = eps(k, a, b);
                if e == 0.0 {
                    continue;
                }
                for l in 0..3 {
                    target.add_to(9 + a, 9 + l, e * iinv.get(b, l));
                }
            }
        }
    }
    Ok(QuadraticField::new(
        vec![0.0; 12],
        Mat::zeros(12, 12),
        quad,
        "euler-poisson",
    ))
}

#[derive(Debug, Clone, Copy)]
pub enum BodyMethod {
    Rk,
    LieSeries { order: usize, step: f64 },
}

/// Integrate from the universal initial conditions R(0) = 1, M(0) = I Ω_0.
///
/// Diagnostics per sample: energy drift, |M|² drift, ‖RᵀR − 1‖∞.
pub fn simulate_body(
    inertia: &InertiaData,
    omega0: &[f64],
    t_end: f64,
    sample_dt: f64,
    method: BodyMethod,
    tol: &Tolerances,
) -> Result<Trajectory> {
    if t_end <= 0.0 || sample_dt <= 0.0 {
        return Err(Error::Invalid("t_end and sample_dt must be positive".into()));
    }
    let m0 = inertia.inertia.matvec(omega0);
    let z0 = BodyState {
        r: Mat::identity(3),
        m: m0.clone(),
    }
    .packed();
    let field = euler_poisson_field(inertia)?;
    let h0 = hamiltonian_body(inertia, &BodyState::unpack(&z0))?;
    let msq0 = vecops::dot(&m0, &m0);
    let mut labels: Vec<String> = Vec::new();
    for i in 1..=3 {
        for j in 1..=3 {
            labels.push(format!("R{i}{j}"));
        }
    }
    labels.extend((1..=3).map(|k| format!("M{k}")));
    let diag_labels = vec![
        "energy_drift".into(),
        "momentum_drift".into(),
        "orthogonality_residual".into(),
    ];
    let mut traj = Trajectory::new(labels, diag_labels);
    let push_sample = |traj: &mut Trajectory, t: f64, z: &[f64]| -> Result<()> {
        let state = BodyState::unpack(z);
        let h = hamiltonian_body(inertia, &state)?;
        let msq = vecops::dot(&state.m, &state.m);
        traj.push(
            t,
            z.to_vec(),
            vec![
                (h - h0).abs(),
                (msq - msq0).abs(),
                state.orthogonality_residual(),
            ],
        );
        Ok(())
    };
    match method {
        BodyMethod::Rk => {
            let steps = (t_end / sample_dt).ceil() as usize;
            let mut z = z0;
            let mut t = 0.0;
            push_sample(&mut traj, t, &z)?;
            for _ in 0..steps {
                let t_next = (t + sample_dt).min(t_end);
                z = rk_drive(&field, &z, t, t_next, tol, &mut |_, _| {})?;
                t = t_next;
                push_sample(&mut traj, t, &z)?;
            }
        }
        BodyMethod::LieSeries { order, step } => {
            let samples: Vec<f64> = sample_grid(t_end, sample_dt);
            let sol = lie_solve(&field, &z0, t_end, order, step, &samples)?;
            for s in &sol.samples {
                push_sample(&mut traj, s.t, &s.state)?;
            }
        }
    }
    Ok(traj)
}

pub(crate) fn sample_grid(t_end: f64, sample_dt: f64) -> Vec<f64> {
    let steps = (t_end / sample_dt).ceil() as usize;
    let mut out: Vec<f64> = (0..steps).map(|i| i as f64 * sample_dt).collect();
    out.push(t_end);
    out
}

/// The spinning body as a generic 9-coordinate constrained system with the
/// six orthogonality constraints (upper-triangle enumeration of RᵀR − 1).
/// Requires a non-planar body: the block mass matrix must be
/// positive-definite.
pub fn constrained_system(inertia: &InertiaData) -> Result<Arc<ConstrainedSystem>> {
    if !inertia.is_non_planar() {
        return Err(Error::Planarity(
            "the 9-coordinate representation needs all principal g values positive".into(),
        ));
    }
    let pairs: Vec<(usize, usize)> = (0..3)
        .flat_map(|i| (i..3).map(move |j| (i, j)))
        .collect();
    let pairs_j = pairs.clone();
    let pairs_h = pairs.clone();
    let spec = ConstraintSpec::new(9, 6, move |q: &[f64]| {
        pairs
            .iter()
            .map(|&(i, j)| {
                (0..3).map(|k| q[3 * k + i] * q[3 * k + j]).sum::<f64>()
                    - if i == j { 1.0 } else { 0.0 }
            })
            .collect()
    })
    .with_jacobian(move |q: &[f64]| {
        Mat::from_fn(6, 9, |alpha, col| {
            let (i, j) = pairs_j[alpha];
            let (a, b) = (col / 3, col % 3);
            let mut v = 0.0;
            if b == i {
                v += q[3 * a + j];
            }
            if b == j {
                v += q[3 * a + i];
            }
            v
        })
    })
    .with_hessians(move |_q: &[f64]| {
        pairs_h
            .iter()
            .map(|&(i, j)| {
                Mat::from_fn(9, 9, |row, col| {
                    let (a, b) = (row / 3, row % 3);
                    let (c, d) = (col / 3, col % 3);
                    if a != c {
                        return 0.0;
                    }
                    let mut v = 0.0;
                    if b == i && d == j {
                        v += 1.0;
                    }
                    if b == j && d == i {
                        v += 1.0;
                    }
                    v
                })
            })
            .collect()
    });
    let mut labels = Vec::with_capacity(9);
    for i in 1..=3 {
        for j in 1..=3 {
            labels.push(format!("R{i}{j}"));
        }
    }
    let g_for_mass = inertia.g.clone();
    let sys = ConstrainedSystem::new(
        labels,
        move |_q: &[f64]| {
            // Block-diagonal mass: M_{(k,a),(l,b)} = δ_kl g_ab.
            Mat::from_fn(9, 9, |row, col| {
                let (k, a) = (row / 3, row % 3);
                let (l, b) = (col / 3, col % 3);
                if k == l {
                    g_for_mass.get(a, b)
                } else {
                    0.0
                }
            })
        },
        |_q: &[f64]| 0.0,
        spec,
    )?
    .with_mass_partials(|_q, _e| Mat::zeros(9, 9))
    .with_potential_gradient(|_q| vec![0.0; 9]);
    Ok(Arc::new(sys))
}

/// Haar-ish random rotation: Gram-Schmidt on a random matrix, determinant
/// fixed to +1.
pub fn random_rotation(rng: &mut impl Rng) -> Mat {
    loop {
        let a = Mat::from_fn(3, 3, |_, _| rng.gen_range(-1.0..1.0));
        let mut cols: Vec<Vec<f64>> = (0..3)
            .map(|j| (0..3).map(|i| a.get(i, j)).collect())
            .collect();
        let mut ok = true;
        for j in 0..3 {
            for l in 0..j {
                let proj = vecops::dot(&cols[j], &cols[l]);
                for i in 0..3 {
                    let d = proj * cols[l][i];
                    cols[j][i] -= d;
                }
            }
            let nrm = vecops::norm2(&cols[j]);
            if nrm < 1e-6 {
                ok = false;
                break;
            }
            for v in cols[j].iter_mut() {
                *v /= nrm;
            }
        }
        if !ok {
            continue;
        }
        let mut r = Mat::from_fn(3, 3, |i, j| cols[j][i]);
        if r.det() < 0.0 {
            for i in 0..3 {
                let v = -r.get(i, 2);
                r.set(i, 2, v);
            }
        }
        return r;
    }
}

/// Random on-shell canonical state of the 9-coordinate system: orthogonal
/// R and p = Ṙ g with Ṙ generated by a random angular velocity.
pub fn random_on_shell(
    inertia: &InertiaData,
    rng: &mut impl Rng,
) -> (FullPhaseState, BodyState) {
    let r = random_rotation(rng);
    let omega: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let w = Mat::from_fn(3, 3, |m, j| {
        -(0..3).map(|k| eps(m, j, k) * omega[k]).sum::<f64>()
    });
    let rdot = r.matmul(&w);
    let p = rdot.matmul(&inertia.g);
    let m = inertia.inertia.matvec(&omega);
    (
        FullPhaseState::new(r.data().to_vec(), p.data().to_vec()),
        BodyState { r, m },
    )
}

/// Hamiltonian field ω ∇H for one of the bracket structures; used to check
/// that both reproduce the component equations.
pub fn bracket_flow(inertia: &InertiaData, kind: BodyStructureKind, tol: &Tolerances) -> FnField {
    let structure = rigid_body_structure(kind);
    let h = crate::poisson::PhaseFunction::with_gradient(
        {
            let inertia = inertia.clone();
            move |z: &[f64]| {
                let state = BodyState::unpack(z);
                hamiltonian_body(&inertia, &state).unwrap_or(f64::NAN)
            }
        },
        {
            let inertia = inertia.clone();
            move |z: &[f64]| {
                let state = BodyState::unpack(z);
                let iom = inertia.inertia.solve(&state.m).expect("inertia solve");
                let mut g = vec![0.0; 12];
                g[9..].copy_from_slice(&iom);
                g
            }
        },
    );
    structure.hamiltonian_field(h, *tol, "body-bracket-flow")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::VectorField;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    #[test]
    fn octahedron_particles_give_isotropic_tensors() {
        let parts = vec![
            (1.0, [1.0, 0.0, 0.0]),
            (1.0, [-1.0, 0.0, 0.0]),
            (1.0, [0.0, 1.0, 0.0]),
            (1.0, [0.0, -1.0, 0.0]),
            (1.0, [0.0, 0.0, 1.0]),
            (1.0, [0.0, 0.0, -1.0]),
        ];
        let data = mass_matrix_from_particles(&BodyDescription::Particles(parts)).unwrap();
        assert!(data.g.sub(&Mat::identity(3).scaled(2.0)).max_abs() < 1e-12);
        assert!(data.inertia.sub(&Mat::identity(3).scaled(4.0)).max_abs() < 1e-12);
    }

    #[test]
    fn unit_mass_matrix_gives_inertia_two() {
        let d = InertiaData::from_g_diag([1.0, 1.0, 1.0]).unwrap();
        assert!(d.inertia.sub(&Mat::identity(3).scaled(2.0)).max_abs() < 1e-14);
    }

    #[test]
    fn planar_distribution_is_rejected() {
        let parts = vec![
            (1.0, [1.0, 0.0, 0.0]),
            (1.0, [0.0, 1.0, 0.0]),
            (1.0, [-1.0, -1.0, 0.0]),
        ];
        assert!(matches!(
            mass_matrix_from_particles(&BodyDescription::Particles(parts)),
            Err(Error::Planarity(_))
        ));
    }

    #[test]
    fn triangle_relations_hold() {
        let d = InertiaData::from_principal_inertia([1.0, 2.0, 3.0]).unwrap();
        let g = d.g_diag();
        let i = d.inertia_diag();
        assert!((2.0 * g[0] - (i[1] + i[2] - i[0])).abs() < 1e-14);
        assert!((i[0] - (g[1] + g[2])).abs() < 1e-14);
        assert!((g[0] - g[1] - (i[1] - i[0])).abs() < 1e-14);
    }

    #[test]
    fn momentum_split_of_antisymmetric_source() {
        // p = R (ε·a): S vanishes; M = −2a by the definition of the split,
        // and the reconstruction returns p exactly.
        let mut rng = StdRng::seed_from_u64(5);
        let r = random_rotation(&mut rng);
        let a = [0.4, -0.9, 0.3];
        let amat = Mat::from_fn(3, 3, |i, j| (0..3).map(|k| eps(i, j, k) * a[k]).sum());
        let p = r.matmul(&amat);
        let (s, m) = momentum_split(&r, &p).unwrap();
        assert!(s.max_abs() < 1e-12);
        for k in 0..3 {
            assert!((m[k] + 2.0 * a[k]).abs() < 1e-12);
        }
        let back = momentum_join(&r, &s, &m);
        assert!(back.sub(&p).max_abs() < 1e-12);
    }

    #[test]
    fn momentum_split_of_symmetric_source_has_no_m() {
        let mut rng = StdRng::seed_from_u64(6);
        let r = random_rotation(&mut rng);
        let d = Mat::from_rows(&[
            vec![0.5, 0.2, -0.1],
            vec![0.2, -0.7, 0.4],
            vec![-0.1, 0.4, 1.1],
        ]);
        let p = r.matmul(&d);
        let (_s, m) = momentum_split(&r, &p).unwrap();
        assert!(vecops::norm_inf(&m) < 1e-12);
    }

    #[test]
    fn momentum_split_roundtrip_random() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..20 {
            let r = Mat::from_fn(3, 3, |_, _| rng.gen_range(-1.0..1.0));
            if r.det().abs() < 0.1 {
                continue;
            }
            let p = Mat::from_fn(3, 3, |_, _| rng.gen_range(-1.0..1.0));
            let (s, m) = momentum_split(&r, &p).unwrap();
            let back = momentum_join(&r, &s, &m);
            assert!(back.sub(&p).max_abs() < 1e-10);
        }
    }

    #[test]
    fn resolve_s_symmetric_top_zeroes_the_degenerate_entry() {
        let d = InertiaData::from_principal_inertia([2.0, 2.0, 4.0]).unwrap();
        let s = resolve_s(&d, &[0.3, -0.8, 1.1]).unwrap();
        assert!(s.get(0, 1).abs() < 1e-14);
        assert!(s.get(1, 0).abs() < 1e-14);
    }

    #[test]
    fn resolve_s_matches_hand_value() {
        let d = InertiaData::from_g_diag([1.0, 2.0, 3.0]).unwrap();
        let s = resolve_s(&d, &[1.0, 0.0, 0.0]).unwrap();
        assert!((s.get(1, 2) + 0.2).abs() < 1e-14);
        assert!((s.get(2, 1) + 0.2).abs() < 1e-14);
        assert!(s.get(0, 1).abs() < 1e-14);
        assert!(s.get(0, 2).abs() < 1e-14);
    }

    #[test]
    fn resolve_s_two_closed_forms_agree() {
        let mut rng = StdRng::seed_from_u64(8);
        for _ in 0..20 {
            let g = [
                rng.gen_range(0.5..3.0),
                rng.gen_range(0.5..3.0),
                rng.gen_range(0.5..3.0),
            ];
            let d = InertiaData::from_g_diag(g).unwrap();
            let i = d.inertia_diag();
            let m: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let s = resolve_s(&d, &m).unwrap();
            for a in 0..3 {
                for b in 0..3 {
                    if a == b {
                        continue;
                    }
                    let k = 3 - a - b;
                    let other = (i[b] - i[a]) / i[k] * eps(a, b, k) * m[k];
                    assert!((s.get(a, b) - other).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn structures_coincide_on_the_orthogonality_surface() {
        let mut rng = StdRng::seed_from_u64(9);
        let full = rigid_body_structure(BodyStructureKind::Full);
        let chetaev = rigid_body_structure(BodyStructureKind::Chetaev);
        for _ in 0..10 {
            let r = random_rotation(&mut rng);
            let m: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let z = BodyState { r, m }.packed();
            let a = full.tensor(&z).unwrap();
            let b = chetaev.tensor(&z).unwrap();
            assert!(a.sub(&b).max_abs() < 1e-12);
        }
    }

    #[test]
    fn r_block_commutes_exactly() {
        let mut rng = StdRng::seed_from_u64(10);
        let full = rigid_body_structure(BodyStructureKind::Full);
        let r = random_rotation(&mut rng);
        let z = BodyState {
            r,
            m: vec![0.3, 0.5, -0.2],
        }
        .packed();
        let omega = full.tensor(&z).unwrap();
        for a in 0..9 {
            for b in 0..9 {
                assert_eq!(omega.get(a, b), 0.0);
            }
        }
    }

    #[test]
    fn full_structure_is_the_canonical_bracket_of_the_split_variables() {
        // {M_i, M_j} and {M_i, R_jk} computed as canonical brackets of the
        // functions M(R, p), R on (q, p) must reproduce the closed forms at
        // arbitrary (non-orthogonal) R.
        let mut rng = StdRng::seed_from_u64(11);
        let tol = Tolerances::default();
        let canonical = PoissonStructure::canonical(9);
        let r = Mat::from_fn(3, 3, |i, j| {
            if i == j {
                1.2
            } else {
                0.3 * ((i + 2 * j) as f64).sin()
            }
        });
        let p = Mat::from_fn(3, 3, |_, _| rng.gen_range(-1.0..1.0));
        let mut z = r.data().to_vec();
        z.extend_from_slice(p.data());
        let m_fn = |k: usize| {
            crate::poisson::PhaseFunction::new(move |z: &[f64]| {
                let r = Mat::from_fn(3, 3, |i, j| z[3 * i + j]);
                let pm = Mat::from_fn(3, 3, |i, j| z[9 + 3 * i + j]);
                let (_, m) = momentum_split(&r, &pm).unwrap();
                m[k]
            })
        };
        let full = rigid_body_structure(BodyStructureKind::Full);
        let state_z = {
            let (_, m) = momentum_split(&r, &p).unwrap();
            BodyState { r: r.clone(), m }.packed()
        };
        let omega = full.tensor(&state_z).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let lhs = canonical.bracket(&m_fn(i), &m_fn(j), &z, &tol).unwrap();
                assert!(
                    (lhs - omega.get(9 + i, 9 + j)).abs() < 1e-6,
                    "{{M{i}, M{j}}}: {lhs} vs {}",
                    omega.get(9 + i, 9 + j)
                );
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    let rf = crate::poisson::PhaseFunction::coordinate(18, 3 * j + k);
                    let lhs = canonical.bracket(&m_fn(i), &rf, &z, &tol).unwrap();
                    assert!(
                        (lhs - omega.get(9 + i, 3 * j + k)).abs() < 1e-6,
                        "{{M{i}, R{j}{k}}}"
                    );
                }
            }
        }
    }

    #[test]
    fn euler_poisson_steady_rotation_about_principal_axis() {
        let d = InertiaData::from_principal_inertia([1.0, 2.0, 3.0]).unwrap();
        let state = BodyState {
            r: Mat::identity(3),
            m: vec![0.0, 0.0, 3.0 * 1.7],
        };
        let (_, mdot) = euler_poisson_rhs(&d, &state).unwrap();
        assert!(vecops::norm_inf(&mdot) < 1e-14);
    }

    #[test]
    fn euler_poisson_symmetric_top_keeps_m3() {
        let d = InertiaData::from_principal_inertia([2.0, 2.0, 4.0]).unwrap();
        let state = BodyState {
            r: Mat::identity(3),
            m: vec![0.7, -0.4, 1.9],
        };
        let (_, mdot) = euler_poisson_rhs(&d, &state).unwrap();
        assert!(mdot[2].abs() < 1e-14);
    }

    #[test]
    fn component_equations_match_bracket_flow_both_kinds() {
        let mut rng = StdRng::seed_from_u64(12);
        let d = InertiaData::from_principal_inertia([1.0, 2.0, 3.0]).unwrap();
        let tol = Tolerances::default();
        for _ in 0..10 {
            let r = random_rotation(&mut rng);
            let m: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let state = BodyState { r, m };
            let (rdot, mdot) = euler_poisson_rhs(&d, &state).unwrap();
            let mut expect = rdot.data().to_vec();
            expect.extend(&mdot);
            for kind in [BodyStructureKind::Full, BodyStructureKind::Chetaev] {
                let field = bracket_flow(&d, kind, &tol);
                let got = field.eval(&state.packed()).unwrap();
                assert!(
                    vecops::max_abs_diff(&got, &expect) < 1e-10,
                    "{kind:?} deviates"
                );
            }
        }
    }

    #[test]
    fn quadratic_field_matches_component_equations() {
        let mut rng = StdRng::seed_from_u64(13);
        let d = InertiaData::from_principal_inertia([1.0, 2.0, 3.0]).unwrap();
        let field = euler_poisson_field(&d).unwrap();
        for _ in 0..10 {
            let r = random_rotation(&mut rng);
            let m: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let state = BodyState { r, m };
            let (rdot, mdot) = euler_poisson_rhs(&d, &state).unwrap();
            let mut expect = rdot.data().to_vec();
            expect.extend(&mdot);
            let got = field.eval(&state.packed()).unwrap();
            assert!(vecops::max_abs_diff(&got, &expect) < 1e-12);
        }
    }

    #[test]
    fn hamiltonian_simple_value_and_split_equality() {
        let d = InertiaData::from_g_diag([1.0, 1.0, 1.0]).unwrap();
        // I = diag(2,2,2), M = (2,0,0) → H = 1.
        let h = hamiltonian_body(
            &d,
            &BodyState {
                r: Mat::identity(3),
                m: vec![2.0, 0.0, 0.0],
            },
        )
        .unwrap();
        assert!((h - 1.0).abs() < 1e-14);

        let mut rng = StdRng::seed_from_u64(14);
        let d = InertiaData::from_g_diag([0.7, 1.9, 2.4]).unwrap();
        for _ in 0..20 {
            let m: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let s = resolve_s(&d, &m).unwrap();
            let h_closed = hamiltonian_body(
                &d,
                &BodyState {
                    r: Mat::identity(3),
                    m: m.clone(),
                },
            )
            .unwrap();
            let h_split = hamiltonian_body_via_split(&d, &s, &m).unwrap();
            assert!((h_closed - h_split).abs() < 1e-10);
        }
    }

    #[test]
    fn hamiltonian_is_frame_invariant() {
        let mut rng = StdRng::seed_from_u64(15);
        let d = InertiaData::from_principal_inertia([1.0, 2.0, 3.0]).unwrap();
        let o = random_rotation(&mut rng);
        let rotated = d.rotated(&o);
        let m: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let m_rot = o.tr_matvec(&m);
        let h1 = hamiltonian_body(
            &d,
            &BodyState {
                r: Mat::identity(3),
                m: m.clone(),
            },
        )
        .unwrap();
        let h2 = hamiltonian_body(
            &rotated,
            &BodyState {
                r: Mat::identity(3),
                m: m_rot,
            },
        )
        .unwrap();
        assert!((h1 - h2).abs() < 1e-10);
    }

    #[test]
    fn chetaev_msq_is_a_casimir_pointwise() {
        let mut rng = StdRng::seed_from_u64(16);
        let chetaev = rigid_body_structure(BodyStructureKind::Chetaev);
        let tol = Tolerances::default();
        let msq = crate::poisson::PhaseFunction::with_gradient(
            |z: &[f64]| z[9..].iter().map(|v| v * v).sum(),
            |z: &[f64]| {
                let mut g = vec![0.0; 12];
                for k in 0..3 {
                    g[9 + k] = 2.0 * z[9 + k];
                }
                g
            },
        );
        for _ in 0..10 {
            let r = random_rotation(&mut rng);
            let m: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let z = BodyState { r, m }.packed();
            for k in 0..3 {
                let mk = crate::poisson::PhaseFunction::coordinate(12, 9 + k);
                let v = chetaev.bracket(&msq, &mk, &z, &tol).unwrap();
                assert!(v.abs() < 1e-12, "{{|M|², M{k}}} = {v:.3e}");
            }
        }
    }

    #[test]
    fn steady_axis_rotation_recovers_the_rotation_matrix() {
        // Ω along the third principal axis: R(t) rotates about e3 with
        // angle Ω t (clockwise in the 1-2 plane for this sign convention).
        let d = InertiaData::from_principal_inertia([1.0, 2.0, 3.0]).unwrap();
        let w = 0.9;
        let tol = Tolerances::tight();
        let traj = simulate_body(&d, &[0.0, 0.0, w], 1.0, 0.25, BodyMethod::Rk, &tol).unwrap();
        for s in &traj.samples {
            let angle = w * s.t;
            let expect = [
                angle.cos(),
                -angle.sin(),
                0.0,
                angle.sin(),
                angle.cos(),
                0.0,
                0.0,
                0.0,
                1.0,
            ];
            for (got, want) in s.state[..9].iter().zip(expect) {
                assert!((got - want).abs() < 1e-8, "t = {}", s.t);
            }
        }
    }

    #[test]
    fn symmetric_top_precession_rate() {
        // I = (2,2,4), Ω0 = (1,0,1): Ω3 constant, (Ω1, Ω2) precess at rate
        // ((I3 − I1)/I1) Ω3 = 1: Ω1(t) = cos t, Ω2(t) = sin t.
        let d = InertiaData::from_principal_inertia([2.0, 2.0, 4.0]).unwrap();
        let tol = Tolerances::tight();
        let traj = simulate_body(&d, &[1.0, 0.0, 1.0], 2.0, 0.1, BodyMethod::Rk, &tol).unwrap();
        for s in &traj.samples {
            let om1 = s.state[9] / 2.0;
            let om2 = s.state[10] / 2.0;
            let om3 = s.state[11] / 4.0;
            assert!((om3 - 1.0).abs() < 1e-10, "Ω3 drift at t = {}", s.t);
            assert!((om1 - s.t.cos()).abs() < 1e-8);
            assert!((om2 - s.t.sin()).abs() < 1e-8);
        }
    }

    #[test]
    fn conservation_diagnostics_stay_small() {
        let d = InertiaData::from_principal_inertia([1.0, 2.0, 3.0]).unwrap();
        let tol = Tolerances::tight();
        let traj = simulate_body(&d, &[1.0, 1.0, 1.0], 1.0, 0.1, BodyMethod::Rk, &tol).unwrap();
        assert!(traj.max_diagnostic("energy_drift").unwrap() < 1e-9);
        assert!(traj.max_diagnostic("momentum_drift").unwrap() < 1e-9);
        assert!(traj.max_diagnostic("orthogonality_residual").unwrap() < 1e-8);
    }

    #[test]
    fn canonical_hamiltonian_is_the_block_trace_form() {
        // H = ½ g⁻¹_ij p_ki p_kj on the 9-coordinate system.
        let mut rng = StdRng::seed_from_u64(31);
        let d = InertiaData::from_g_diag([1.0, 2.0, 3.0]).unwrap();
        let sys = constrained_system(&d).unwrap();
        let g = d.g_diag();
        for _ in 0..10 {
            let q: Vec<f64> = (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let p = Mat::from_fn(3, 3, |_, _| rng.gen_range(-1.0..1.0));
            let h = sys
                .canonical_hamiltonian(&crate::lagrangian::FullPhaseState::new(
                    q.clone(),
                    p.data().to_vec(),
                ))
                .unwrap();
            let mut direct = 0.0;
            for k in 0..3 {
                for i in 0..3 {
                    direct += 0.5 * p.get(k, i) * p.get(k, i) / g[i];
                }
            }
            assert!((h - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn legendre_velocity_is_p_g_inverse() {
        // p = Ṙ g resolves as Ṙ = p g⁻¹ through the generic Legendre map.
        let mut rng = StdRng::seed_from_u64(32);
        let d = InertiaData::from_g_diag([0.8, 1.7, 2.2]).unwrap();
        let sys = constrained_system(&d).unwrap();
        let q: Vec<f64> = (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let rdot = Mat::from_fn(3, 3, |_, _| rng.gen_range(-1.0..1.0));
        let p = rdot.matmul(&d.g);
        let v = sys
            .legendre_velocity(&crate::lagrangian::FullPhaseState::new(
                q,
                p.data().to_vec(),
            ))
            .unwrap();
        assert!(vecops::max_abs_diff(&v, rdot.data()) < 1e-12);
    }

    #[test]
    fn generic_reduced_energy_equals_the_closed_form() {
        // The substituted Hamiltonian of the 9-coordinate reduction must
        // equal ½ M I⁻¹ M at the matching body state; energy does not care
        // about the chart.
        let mut rng = StdRng::seed_from_u64(33);
        let d = InertiaData::from_g_diag([1.0, 2.0, 3.0]).unwrap();
        let sys = constrained_system(&d).unwrap();
        let rs = crate::reduction::reduce_intermediate(&sys, Tolerances::default());
        for _ in 0..20 {
            let (full, body) = random_on_shell(&d, &mut rng);
            let state = rs.project(&full).unwrap();
            let h_generic = rs.generic_hamiltonian(&state).unwrap();
            let h_closed = hamiltonian_body(&d, &body).unwrap();
            assert!(
                (h_generic - h_closed).abs() < 1e-10,
                "{h_generic} vs {h_closed}"
            );
        }
    }

    #[test]
    fn orthogonality_entries_are_flow_casimirs() {
        // (RᵀR)_ab is conserved by the bracket flow of the full structure.
        let d = InertiaData::from_principal_inertia([1.0, 2.0, 3.0]).unwrap();
        let structure = rigid_body_structure(BodyStructureKind::Full);
        let tol = Tolerances::tight();
        let h = crate::poisson::PhaseFunction::new({
            let d = d.clone();
            move |z: &[f64]| hamiltonian_body(&d, &BodyState::unpack(z)).unwrap_or(f64::NAN)
        });
        let z0 = BodyState {
            r: Mat::identity(3),
            m: vec![0.7, -1.1, 0.4],
        }
        .packed();
        for (a, b) in [(0usize, 0usize), (0, 1), (1, 2)] {
            let casimir = crate::poisson::PhaseFunction::new(move |z: &[f64]| {
                (0..3).map(|k| z[3 * k + a] * z[3 * k + b]).sum()
            });
            let drift =
                crate::poisson::casimir_drift(&structure, &casimir, &h, &z0, (0.0, 1.0), &tol)
                    .unwrap();
            assert!(drift < 1e-8, "(RᵀR)_{a}{b} drifted by {drift:.3e}");
        }
    }

    #[test]
    fn symmetric_top_series_keeps_m3_term_free() {
        // Every Taylor coefficient of M3 beyond the constant vanishes for
        // I1 = I2.
        let d = InertiaData::from_principal_inertia([2.0, 2.0, 4.0]).unwrap();
        let field = euler_poisson_field(&d).unwrap();
        let z0 = BodyState {
            r: Mat::identity(3),
            m: d.inertia.matvec(&[1.0, 0.4, 1.0]),
        }
        .packed();
        let coeffs = crate::lie::lie_apply_coordinate(&field, 11, &z0, 20).unwrap();
        assert!((coeffs[0] - z0[11]).abs() < 1e-14);
        for c in &coeffs[1..] {
            assert!(c.abs() < 1e-10, "M3 coefficient {c:.3e}");
        }
    }

    #[test]
    fn multiplier_ode_reproduces_the_component_flow() {
        // Integrate the second-order equations of the 9-coordinate system
        // and map the result through the momentum split; it must match the
        // component equations' trajectory.
        let d = InertiaData::from_g_diag([1.0, 2.0, 3.0]).unwrap();
        let sys = constrained_system(&d).unwrap();
        let tol = Tolerances::tight();
        let omega0 = [0.9, -0.4, 0.7];
        let w = Mat::from_fn(3, 3, |m, j| {
            -(0..3).map(|k| eps(m, j, k) * omega0[k]).sum::<f64>()
        });
        let rdot0 = w.clone();
        let mut z0 = Mat::identity(3).data().to_vec();
        z0.extend(rdot0.data());
        let field = sys.multiplier_field(tol);
        let t_end = 0.6;
        let z_end = crate::numeric::rk::rk_drive(&field, &z0, 0.0, t_end, &tol, &mut |_, _| {})
            .unwrap();
        let r_end = Mat::from_fn(3, 3, |i, j| z_end[3 * i + j]);
        let rdot_end = Mat::from_fn(3, 3, |i, j| z_end[9 + 3 * i + j]);
        let p_end = rdot_end.matmul(&d.g);
        let (_, m_end) = momentum_split(&r_end, &p_end).unwrap();

        let reference = simulate_body(&d, &omega0, t_end, t_end, BodyMethod::Rk, &tol).unwrap();
        let ref_state = reference.last_state().unwrap();
        assert!(
            vecops::max_abs_diff(r_end.data(), &ref_state[..9]) < 1e-8,
            "configurations diverged"
        );
        assert!(
            vecops::max_abs_diff(&m_end, &ref_state[9..]) < 1e-8,
            "angular momenta diverged"
        );
    }
}
