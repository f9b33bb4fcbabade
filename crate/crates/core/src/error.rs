use thiserror::Error;

/// Errors produced by the numerical kernel and the reduction machinery.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix not symmetric: max |M - M^T| = {asymmetry:.3e} exceeds {tol:.3e}")]
    NotSymmetric { asymmetry: f64, tol: f64 },

    #[error("matrix not positive-definite: {0}")]
    NotPositiveDefinite(String),

    #[error("rank deficiency: {0}")]
    RankDeficient(String),

    #[error("singular matrix in {0}")]
    Singular(String),

    #[error("Newton iteration diverged after {iterations} iterations, last residual {residual:.3e}")]
    NewtonDiverged { iterations: usize, residual: f64 },

    #[error("step size underflow at t = {t:.6e} (stiff or singular right-hand side)")]
    StepUnderflow { t: f64 },

    #[error("quadrature refinement limit reached on [{a}, {b}], error estimate {estimate:.3e}")]
    QuadratureLimit { a: f64, b: f64, estimate: f64 },

    #[error("chart failure at q = {q:?}: {reason}")]
    Chart { q: Vec<f64>, reason: String },

    #[error("second-class constraint matrix failure: {0}")]
    SecondClass(String),

    #[error("constraint reduction failed: {0}")]
    Reduction(String),

    #[error("momenta variant construction failed: {0}")]
    Variant(String),

    #[error("series divergence at step {step:.3e}: term ratio {ratio:.3e}")]
    SeriesDiverged { step: f64, ratio: f64 },

    #[error("level-set branch lost: {0}")]
    Branch(String),

    #[error("caustic (turning point) encountered: {0}")]
    Caustic(String),

    #[error("degenerate mass distribution: {0}")]
    Planarity(String),

    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
