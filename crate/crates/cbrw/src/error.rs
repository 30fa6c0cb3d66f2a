//! Error type shared by every module of the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CbrwError>;

#[derive(Debug, Error)]
pub enum CbrwError {
    #[error("invalid kernel: {0}")]
    KernelInvalid(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Raised when doubling the spectral quadrature grid keeps changing the
    /// answer beyond tolerance (integrand under-resolved).
    #[error("spectral grid too coarse at t = {t}: refinement still changes the value by {disagreement:e}")]
    GridTooCoarse { t: f64, disagreement: f64 },

    #[error("Hessian of the symbol at θ = 0 is singular (degenerate kernel)")]
    SingularHessian,

    #[error("Green's function G_0 diverges in dimension {d} (recurrent walk)")]
    GreenDivergent { d: usize },

    #[error("{what} requires {requirement}, got d = {d}")]
    DimensionUnsupported {
        what: &'static str,
        requirement: &'static str,
        d: usize,
    },

    #[error("offspring family `{family}` cannot represent mean {mean}")]
    InfeasibleFamily { family: &'static str, mean: f64 },

    #[error("model is not critical: residual {residual:e} exceeds 1e-8")]
    NotCritical { residual: f64 },

    #[error("only {got} surviving replicas, need at least {need}")]
    InsufficientSurvivors { got: usize, need: usize },

    #[error("degenerate normalizer: {0}")]
    DegenerateNormalizer(String),

    #[error("closed-form eigenvectors disagree with power iteration by {deviation:e}")]
    EigenMismatch { deviation: f64 },

    #[error("mean matrix fails indecomposability: {0}")]
    Decomposable(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("numerical instability: {0}")]
    Instability(String),

    #[error("iteration failed to converge: {0}")]
    NonConvergence(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
