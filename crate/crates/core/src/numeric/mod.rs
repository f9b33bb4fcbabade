//! Shared numerical kernel: small dense matrices, finite differences,
//! Newton root-finding, adaptive quadrature, an embedded Runge-Kutta
//! reference integrator and positive-definiteness checks.

pub mod fd;
pub mod mat;
pub mod newton;
pub mod quad;
pub mod rk;

pub use fd::{fd_gradient, fd_jacobian};
pub use mat::{vecops, Mat};
pub use newton::newton_solve;
pub use quad::adaptive_quadrature;
pub use rk::rk_integrate;

use crate::error::{Error, Result};

/// Numerical control knobs shared across the library.
#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    /// Convergence threshold on the infinity norm of Newton residuals.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Base step for finite differences, scaled per component by (1 + |x|).
    pub fd_step: f64,
    /// Local error control for quadrature and the RK integrator.
    pub quad_tol: f64,
    /// Threshold for invariant checks (symmetry, orthogonality, drifts).
    pub invariant_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            newton_tol: 1e-12,
            newton_max_iter: 50,
            fd_step: 1e-6,
            quad_tol: 1e-10,
            invariant_tol: 1e-9,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        let ok = self.newton_tol > 0.0
            && self.newton_max_iter >= 1
            && self.fd_step > 0.0
            && self.quad_tol > 0.0
            && self.invariant_tol > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Invalid("tolerances must all be positive".into()))
        }
    }

    /// RK oracle profile used where cross-checks demand a tight reference.
    pub fn tight() -> Self {
        Tolerances {
            quad_tol: 1e-12,
            ..Default::default()
        }
    }
}

fn require_symmetric(m: &Mat) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "{}x{} matrix where a square symmetric one is required",
            m.rows(),
            m.cols()
        )));
    }
    let tol = 1e-10 * (1.0 + m.max_abs());
    let asym = m.asymmetry();
    if asym > tol {
        return Err(Error::NotSymmetric {
            asymmetry: asym,
            tol,
        });
    }
    Ok(())
}

/// Positive-definiteness via the leading-principal-minor criterion.
///
/// The input must be square and symmetric up to representation noise;
/// the eigenvalue and Cholesky criteria are exercised against this one
/// in the test suite.
pub fn is_positive_definite(m: &Mat) -> Result<bool> {
    require_symmetric(m)?;
    Ok(m.leading_principal_minors().iter().all(|&d| d > 0.0))
}

/// Congruence reduction N = Q^T M Q of a positive-definite M by a
/// full-column-rank Q, returning N and det N (always positive).
pub fn gram_reduction_invertible(q: &Mat, m: &Mat) -> Result<(Mat, f64)> {
    if q.rows() != m.rows() {
        return Err(Error::Dimension(format!(
            "Q is {}x{} but M is {}x{}",
            q.rows(),
            q.cols(),
            m.rows(),
            m.cols()
        )));
    }
    if q.cols() > q.rows() {
        return Err(Error::RankDeficient(format!(
            "Q has more columns ({}) than rows ({})",
            q.cols(),
            q.rows()
        )));
    }
    if !is_positive_definite(m)? {
        return Err(Error::NotPositiveDefinite(
            "gram reduction requires positive-definite M".into(),
        ));
    }
    // Rank check on Q through the spectrum of Q^T Q.
    let qtq = q.transpose().matmul(q);
    let eig = qtq.eigenvalues_symmetric()?;
    let max_eig = eig.last().copied().unwrap_or(0.0);
    if eig[0] <= 1e-12 * max_eig.max(1.0) {
        return Err(Error::RankDeficient(format!(
            "columns of Q are numerically dependent (min/max singular value ratio {:.3e})",
            (eig[0].max(0.0) / max_eig.max(1e-300)).sqrt()
        )));
    }
    let n = q.transpose().matmul(m).matmul(q);
    let det = n.det();
    Ok((n, det))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_mat(rng: &mut StdRng, r: usize, c: usize) -> Mat {
        Mat::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn identity_is_positive_definite() {
        assert!(is_positive_definite(&Mat::identity(3)).unwrap());
    }

    #[test]
    fn indefinite_diagonal_rejected() {
        assert!(!is_positive_definite(&Mat::diag(&[1.0, -1.0])).unwrap());
    }

    #[test]
    fn asymmetric_input_is_an_error() {
        let m = Mat::from_rows(&[vec![1.0, 0.5], vec![0.0, 1.0]]);
        assert!(matches!(
            is_positive_definite(&m),
            Err(Error::NotSymmetric { .. })
        ));
    }

    #[test]
    fn shifted_gram_matrix_is_positive_definite() {
        // M = Q^T Q + I has eigenvalues >= 1; checked against the eigenvalue oracle.
        let mut rng = StdRng::seed_from_u64(42);
        for _ in 0..20 {
            let q = random_mat(&mut rng, 4, 4);
            let m = q.transpose().matmul(&q).add(&Mat::identity(4));
            assert!(is_positive_definite(&m).unwrap());
            let eig = m.eigenvalues_symmetric().unwrap();
            assert!(eig[0] >= 1.0 - 1e-10, "eigenvalue oracle disagrees: {eig:?}");
        }
    }

    #[test]
    fn minor_eigen_and_cholesky_criteria_agree() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..200 {
            let a = random_mat(&mut rng, 4, 4);
            let sym = a.add(&a.transpose()).scaled(0.5);
            // Random shifts make both signs of definiteness common.
            let m = sym.add(&Mat::identity(4).scaled(rng.gen_range(-1.5..1.5)));
            let by_minors = is_positive_definite(&m).unwrap();
            let by_eigen = m.eigenvalues_symmetric().unwrap()[0] > 0.0;
            let by_cholesky = m.cholesky().is_ok();
            assert_eq!(by_minors, by_eigen);
            assert_eq!(by_minors, by_cholesky);
        }
    }

    #[test]
    fn gram_reduction_identity_case() {
        // Q = first two columns of the identity: N must be the 2x2 identity.
        let q = Mat::from_fn(5, 2, |i, j| if i == j { 1.0 } else { 0.0 });
        let (n, det) = gram_reduction_invertible(&q, &Mat::identity(5)).unwrap();
        assert!(n.sub(&Mat::identity(2)).max_abs() < 1e-14);
        assert!((det - 1.0).abs() < 1e-14);
    }

    #[test]
    fn gram_reduction_random_full_rank() {
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..50 {
            let q = random_mat(&mut rng, 5, 2);
            let (n, det) = gram_reduction_invertible(&q, &Mat::identity(5)).unwrap();
            assert!(det > 0.0);
            // Explicit 2x2 determinant as the oracle.
            let expect = n.get(0, 0) * n.get(1, 1) - n.get(0, 1) * n.get(1, 0);
            assert!((det - expect).abs() <= 1e-12 * (1.0 + expect.abs()));
            assert!(n.asymmetry() < 1e-12);
        }
    }

    #[test]
    fn gram_reduction_rejects_duplicated_columns() {
        let mut rng = StdRng::seed_from_u64(3);
        let mut q = random_mat(&mut rng, 5, 2);
        for i in 0..5 {
            let v = q.get(i, 0);
            q.set(i, 1, v);
        }
        assert!(matches!(
            gram_reduction_invertible(&q, &Mat::identity(5)),
            Err(Error::RankDeficient(_))
        ));
    }
}
