use thiserror::Error;

use crate::eigen::SpectrumResult;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("no trajectory remained inside the trapping band ({out_of_band} out of band)")]
    AllPointsOutOfBand { out_of_band: usize },

    #[error("distribution has no mass")]
    DegenerateDistribution,

    #[error("Newton iteration did not converge in {max_iter} iterations (|G| = {residual:e})")]
    NoConvergence { max_iter: usize, residual: f64 },

    #[error("Newton Jacobian is singular (det = {det:e}); likely a bifurcation point")]
    SingularJacobian { det: f64 },

    #[error("Hilbert space dimension {dim} exceeds the cap {cap}")]
    TruncationTooLarge { dim: usize, cap: usize },

    #[error("exact and rk4 damping channels disagree by {diff:e} (tolerance {tol:e})")]
    MethodMismatch { diff: f64, tol: f64 },

    #[error("Arnoldi did not converge after {restarts} restarts ({converged}/{wanted} pairs)")]
    ArnoldiNoConvergence {
        restarts: usize,
        converged: usize,
        wanted: usize,
        partial: Box<SpectrumResult>,
    },

    #[error("operator failed the linearity probe (relative error {0:e})")]
    NonLinearOperator(f64),

    #[error("all eigenvalues lie on the unit circle")]
    DegenerateSpectrum,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("dense Schur decomposition failed to converge")]
    SchurFailed,

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
