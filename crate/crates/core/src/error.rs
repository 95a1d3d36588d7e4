use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("rotation is not unitary: ||A A* - I|| = {deviation:.3e}")]
    NonUnitary { deviation: f64 },

    #[error("invalid radius {name} = {value}: radii must be positive and finite")]
    InvalidRadius { name: &'static str, value: f64 },

    #[error("unsupported dimension n = {0}: only n = 1 and n = 2 are supported")]
    UnsupportedDimension(usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("shrink factor {0} outside (0, 1]")]
    InvalidShrink(f64),

    #[error("quadrature order must be at least 1, got {0}")]
    InvalidOrder(usize),

    #[error("integrand is not finite at node {index} ({value})")]
    PoisonedNode { index: usize, value: f64 },

    #[error("unknown {kind} id `{id}`")]
    UnknownId { kind: &'static str, id: String },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("evaluation hit the singular set at {0}")]
    Singularity(String),

    #[error(
        "Gram matrix is numerically singular (condition {condition:.3e}) at degree {degree}; use a smaller degree"
    )]
    DegreeTooHigh { condition: f64, degree: usize },

    #[error("exponent p must be positive, got {0}")]
    InvalidExponent(f64),

    #[error("L^p iteration diverged at step {step}: objective {objective:.12e} exceeds bound {bound:.12e}")]
    IterationDivergence { step: usize, objective: f64, bound: f64 },

    #[error("weight is not subharmonic: {0}")]
    NotSubharmonic(String),

    #[error("metric is not positive definite at {0}")]
    NotPositiveDefinite(String),

    #[error("non-flat evidence: unitarity residual {unitarity:.3e}, path residual {path:.3e} exceed {tolerance:.1e}")]
    NonFlatEvidence { unitarity: f64, path: f64, tolerance: f64 },

    #[error("cylinder escapes the domain: {0}")]
    DomainEscape(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonFlatEvidence { .. } => 4,
            Error::DegreeTooHigh { .. }
            | Error::PoisonedNode { .. }
            | Error::Singularity(_)
            | Error::IterationDivergence { .. }
            | Error::NotPositiveDefinite(_) => 3,
            _ => 2,
        }
    }
}
