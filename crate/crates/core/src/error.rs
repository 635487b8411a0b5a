use thiserror::Error;

/// Errors raised by the numerical operations of this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("unsupported dimension n={0} (supported: 2 <= n <= 6)")]
    UnsupportedDimension(usize),

    #[error("invalid quadrature level {0} (must be >= 1)")]
    InvalidLevel(usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("point has non-finite coordinates: {0:?}")]
    NonFinitePoint(Vec<f64>),

    #[error("point {point:?} is outside the admissible domain: {reason}")]
    Domain { point: Vec<f64>, reason: String },

    #[error("field domain radius {radius} is too small: at least {required} is needed")]
    DomainTooSmall { radius: f64, required: f64 },

    #[error("kernel singularity: x and y coincide at {0:?}")]
    Singularity(Vec<f64>),

    #[error("integrand is not finite ({value}) at node {index} = {node:?}")]
    NonFiniteIntegrand {
        index: usize,
        node: Vec<f64>,
        value: f64,
    },

    #[error("finite-difference stencil point {point:?} leaves the field domain ({reason})")]
    StencilOutsideDomain { point: Vec<f64>, reason: String },

    #[error("(m={m}, n={n}) is outside the supported coverage: need n >= 3 and either n odd, or n even with m <= n/2 - 1")]
    NotCovered { m: usize, n: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("mollifier construction failed: {0}")]
    Mollifier(String),

    #[error("field spec error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    #[error("linear algebra failure: {0}")]
    LinearAlgebra(String),
}

pub type Result<T> = std::result::Result<T, Error>;
