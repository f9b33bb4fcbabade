//! Solution by quadratures for two-degree-of-freedom systems with two
//! involutive integrals of motion: invert the constant-level equations for
//! the momenta, build the generating potential by line integrals along an
//! axis-aligned path, and solve the resulting transcendental system for
//! the trajectory.

use std::cell::RefCell;

use crate::error::{Error, Result};
use crate::numeric::{adaptive_quadrature, newton_solve, Mat, Tolerances};
use crate::poisson::PhaseFunction;

/// Two integrals of motion H, F over (x, y, p_x, p_y), H listed first.
#[derive(Clone)]
pub struct IntegralPair {
    pub h: PhaseFunction,
    pub f: PhaseFunction,
    pub labels: [String; 2],
}

impl IntegralPair {
    pub fn new(h: PhaseFunction, f: PhaseFunction) -> Self {
        IntegralPair {
            h,
            f,
            labels: ["H".into(), "F".into()],
        }
    }

    /// |{H, F}| under the canonical 2-DOF bracket.
    pub fn involution_residual(&self, z: &[f64], tol: &Tolerances) -> f64 {
        let gh = self.h.gradient(z, tol);
        let gf = self.f.gradient(z, tol);
        // {H, F} = ∂xH ∂pxF − ∂pxH ∂xF + ∂yH ∂pyF − ∂pyH ∂yF.
        (gh[0] * gf[2] - gh[2] * gf[0] + gh[1] * gf[3] - gh[3] * gf[1]).abs()
    }

    /// det ∂(H, F)/∂(p_x, p_y); must stay away from zero on the domain.
    pub fn momentum_jacobian_det(&self, z: &[f64], tol: &Tolerances) -> f64 {
        let gh = self.h.gradient(z, tol);
        let gf = self.f.gradient(z, tol);
        gh[2] * gf[3] - gh[3] * gf[2]
    }

    fn values(&self, z: &[f64]) -> [f64; 2] {
        [self.h.eval(z), self.f.eval(z)]
    }
}

/// One branch of the constant-level surface H = E, F = c, resolved for the
/// momenta by warm-started Newton iteration.
pub struct LevelSurface {
    pair: IntegralPair,
    pub energy: f64,
    pub constant: f64,
    tol: Tolerances,
    // Last successful solution, reused as the Newton start for nearby
    // queries; confined to this surface, so distinct surfaces may be used
    // from different threads.
    warm: RefCell<(f64, f64)>,
}

impl LevelSurface {
    /// Momenta (p_x, p_y) on the branch at (x, y), optionally at shifted
    /// level values (used by the level-derivative quadratures). The Newton
    /// tolerance is pinned near machine precision: the level derivatives
    /// difference these solutions, which amplifies any residual.
    fn momenta_at(&self, x: f64, y: f64, e: f64, c: f64) -> Result<(f64, f64)> {
        let pair = self.pair.clone();
        let residual = move |p: &[f64]| -> Result<Vec<f64>> {
            let z = [x, y, p[0], p[1]];
            let v = pair.values(&z);
            Ok(vec![v[0] - e, v[1] - c])
        };
        let pair2 = self.pair.clone();
        let tol = self.tol;
        let jacobian = move |p: &[f64]| -> Result<Mat> {
            let z = [x, y, p[0], p[1]];
            let gh = pair2.h.gradient(&z, &tol);
            let gf = pair2.f.gradient(&z, &tol);
            Ok(Mat::from_rows(&[
                vec![gh[2], gh[3]],
                vec![gf[2], gf[3]],
            ]))
        };
        let start = *self.warm.borrow();
        let newton_tol = Tolerances {
            newton_tol: 1e-13,
            ..self.tol
        };
        let solved = newton_solve(&residual, &jacobian, &[start.0, start.1], &newton_tol)
            .map_err(|e_in| {
                Error::Branch(format!(
                    "momenta inversion lost the branch at (x, y) = ({x}, {y}): {e_in}"
                ))
            })?;
        *self.warm.borrow_mut() = (solved[0], solved[1]);
        Ok((solved[0], solved[1]))
    }

    pub fn momenta(&self, x: f64, y: f64) -> Result<(f64, f64)> {
        self.momenta_at(x, y, self.energy, self.constant)
    }

    /// |∂_y f_x − ∂_x f_y| by central differences on the inverted branch.
    pub fn curl_residual(&self, x: f64, y: f64) -> Result<f64> {
        let h = self.tol.fd_step * (1.0 + x.abs().max(y.abs()));
        let fx_yp = self.momenta(x, y + h)?.0;
        let fx_ym = self.momenta(x, y - h)?.0;
        let fy_xp = self.momenta(x + h, y)?.1;
        let fy_xm = self.momenta(x - h, y)?.1;
        Ok(((fx_yp - fx_ym) - (fy_xp - fy_xm)).abs() / (2.0 * h))
    }

    fn level_step(&self) -> f64 {
        // Balances fd truncation against the amplified Newton residual.
        1e-5 * (1.0 + self.energy.abs().max(self.constant.abs()))
    }

    // Quadratures over fd-of-Newton integrands carry ~1e-9 noise; requesting
    // more than 1e-8 from the refinement would chase that noise forever.
    fn quad_tol(&self) -> Tolerances {
        Tolerances {
            quad_tol: self.tol.quad_tol.max(1e-8),
            ..self.tol
        }
    }

    /// ∂f/∂E at (x, y) by re-inversion at shifted energy.
    fn momenta_denergy(&self, x: f64, y: f64) -> Result<(f64, f64)> {
        let d = self.level_step();
        let (pxp, pyp) = self.momenta_at(x, y, self.energy + d, self.constant)?;
        let (pxm, pym) = self.momenta_at(x, y, self.energy - d, self.constant)?;
        Ok(((pxp - pxm) / (2.0 * d), (pyp - pym) / (2.0 * d)))
    }

    fn momenta_dconstant(&self, x: f64, y: f64) -> Result<(f64, f64)> {
        let d = self.level_step();
        let (pxp, pyp) = self.momenta_at(x, y, self.energy, self.constant + d)?;
        let (pxm, pym) = self.momenta_at(x, y, self.energy, self.constant - d)?;
        Ok(((pxp - pxm) / (2.0 * d), (pyp - pym) / (2.0 * d)))
    }
}

/// Fix a branch of the level surface H = E, F = c from a momentum seed at
/// a base point.
pub fn invert_levels(
    pair: &IntegralPair,
    energy: f64,
    constant: f64,
    seed_momenta: (f64, f64),
    base_point: (f64, f64),
    tol: &Tolerances,
) -> Result<LevelSurface> {
    let surface = LevelSurface {
        pair: pair.clone(),
        energy,
        constant,
        tol: *tol,
        warm: RefCell::new(seed_momenta),
    };
    // Validate the seed: the branch must exist at the base point.
    surface.momenta(base_point.0, base_point.1)?;
    Ok(surface)
}

/// Generating potential by the axis-aligned path (0,0) → (x,0) → (x,y):
/// Φ = ∫₀ˣ f_x(x', 0) dx' + ∫₀ʸ f_y(x, y') dy'.
pub fn potential_phi(ls: &LevelSurface, x: f64, y: f64) -> Result<f64> {
    let tol = ls.tol;
    let leg_x = integrate_checked(&|xp: f64| ls.momenta(xp, 0.0).map(|m| m.0), 0.0, x, &tol)?;
    let leg_y = integrate_checked(&|yp: f64| ls.momenta(x, yp).map(|m| m.1), 0.0, y, &tol)?;
    Ok(leg_x + leg_y)
}

/// The same potential along the detour (0,0) → (0,y) → (x,y); used to
/// check path independence of the curl-free momenta field.
pub fn potential_phi_detour(ls: &LevelSurface, x: f64, y: f64) -> Result<f64> {
    let tol = ls.tol;
    let leg_y = integrate_checked(&|yp: f64| ls.momenta(0.0, yp).map(|m| m.1), 0.0, y, &tol)?;
    let leg_x = integrate_checked(&|xp: f64| ls.momenta(xp, y).map(|m| m.0), 0.0, x, &tol)?;
    Ok(leg_y + leg_x)
}

// Quadrature over a fallible integrand: failures poison the result through
// a NaN and are reported as branch errors.
fn integrate_checked(
    f: &dyn Fn(f64) -> Result<f64>,
    a: f64,
    b: f64,
    tol: &Tolerances,
) -> Result<f64> {
    let v = adaptive_quadrature(&|t: f64| f(t).unwrap_or(f64::NAN), a, b, tol)?;
    if v.is_nan() {
        return Err(Error::Branch(format!(
            "momenta inversion failed inside the quadrature over [{a}, {b}]"
        )));
    }
    Ok(v)
}

/// Solve the transcendental system for the configuration at time t:
///   b_x = −t + ∫₀ˣ ∂_E f_x(x',0) dx' + ∫₀ʸ ∂_E f_y(x,y') dy'
///   b_y =      ∫₀ˣ ∂_c f_x(x',0) dx' + ∫₀ʸ ∂_c f_y(x,y') dy'
/// and return (x, y, p_x, p_y).
pub fn liouville_solve(
    ls: &LevelSurface,
    b_x: f64,
    b_y: f64,
    t: f64,
    seed_xy: (f64, f64),
) -> Result<(f64, f64, f64, f64)> {
    let tol = ls.quad_tol();
    let residual = |xy: &[f64]| -> Result<Vec<f64>> {
        let (x, y) = (xy[0], xy[1]);
        let de_x =
            integrate_checked(&|xp: f64| ls.momenta_denergy(xp, 0.0).map(|m| m.0), 0.0, x, &tol)?;
        let de_y =
            integrate_checked(&|yp: f64| ls.momenta_denergy(x, yp).map(|m| m.1), 0.0, y, &tol)?;
        let dc_x = integrate_checked(
            &|xp: f64| ls.momenta_dconstant(xp, 0.0).map(|m| m.0),
            0.0,
            x,
            &tol,
        )?;
        let dc_y = integrate_checked(
            &|yp: f64| ls.momenta_dconstant(x, yp).map(|m| m.1),
            0.0,
            y,
            &tol,
        )?;
        Ok(vec![-t + de_x + de_y - b_x, dc_x + dc_y - b_y])
    };
    let jacobian = |xy: &[f64]| -> Result<Mat> {
        let h = 1e-6 * (1.0 + xy[0].abs().max(xy[1].abs()));
        let mut jac = Mat::zeros(2, 2);
        for col in 0..2 {
            let mut plus = xy.to_vec();
            plus[col] += h;
            let mut minus = xy.to_vec();
            minus[col] -= h;
            let rp = residual(&plus)?;
            let rm = residual(&minus)?;
            for row in 0..2 {
                jac.set(row, col, (rp[row] - rm[row]) / (2.0 * h));
            }
        }
        Ok(jac)
    };
    let newton_tol = Tolerances {
        newton_tol: 1e-9,
        newton_max_iter: 40,
        ..tol
    };
    let xy = newton_solve(&residual, &jacobian, &[seed_xy.0, seed_xy.1], &newton_tol)
        .map_err(|e| Error::Caustic(format!("trajectory inversion at t = {t}: {e}")))?;
    let (px, py) = ls.momenta(xy[0], xy[1])?;
    Ok((xy[0], xy[1], px, py))
}

/// The phase constants (b_x, b_y) of a state on the surface at time t;
/// inverse bookkeeping for matched initial data.
pub fn phase_constants(ls: &LevelSurface, x: f64, y: f64, t: f64) -> Result<(f64, f64)> {
    let tol = ls.quad_tol();
    let de_x =
        integrate_checked(&|xp: f64| ls.momenta_denergy(xp, 0.0).map(|m| m.0), 0.0, x, &tol)?;
    let de_y =
        integrate_checked(&|yp: f64| ls.momenta_denergy(x, yp).map(|m| m.1), 0.0, y, &tol)?;
    let dc_x =
        integrate_checked(&|xp: f64| ls.momenta_dconstant(xp, 0.0).map(|m| m.0), 0.0, x, &tol)?;
    let dc_y =
        integrate_checked(&|yp: f64| ls.momenta_dconstant(x, yp).map(|m| m.1), 0.0, y, &tol)?;
    Ok((-t + de_x + de_y, dc_x + dc_y))
}

/// Canonical Hamiltonian field of the pair's H, for oracle comparisons.
pub fn hamiltonian_field_2dof(pair: &IntegralPair, tol: &Tolerances) -> crate::field::FnField {
    let h = pair.h.clone();
    let tol = *tol;
    crate::field::FnField::new(4, "liouville-oracle", move |z: &[f64]| {
        let g = h.gradient(z, &tol);
        Ok(vec![g[2], g[3], -g[0], -g[1]])
    })
}
