use thiserror::Error;

/// Failure modes shared by every computation in the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SisError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// Stochastic quantities are undefined when the noise intensity is zero.
    #[error("sigma = 0: stochastic quantities are undefined")]
    SigmaZero,

    #[error("domain error: {0}")]
    Domain(String),

    /// No invariant density exists (R0^S <= 1).
    #[error("invariant density is not normalizable (R0^S = {r0_stoch})")]
    NotNormalizable { r0_stoch: f64 },

    #[error("precondition failed: {0}")]
    PreconditionFailed(String),

    #[error("time step {dt} exceeds stability limit {limit}")]
    StepTooLarge { dt: f64, limit: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("singular tridiagonal system at row {row}")]
    SingularSystem { row: usize },

    #[error("steady state not reached by t = {time} (last increment {increment:e})")]
    NotConverged { time: f64, increment: f64 },

    #[error("quadrature failure: {0}")]
    QuadratureFailure(String),

    /// The boundary dichotomy cannot be resolved at working precision.
    #[error("inconclusive boundary classification: {0}")]
    Inconclusive(String),
}

pub type Result<T, E = SisError> = std::result::Result<T, E>;
