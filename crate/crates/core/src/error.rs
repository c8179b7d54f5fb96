use alloc::string::String;

/// Failure modes shared by every module of the core crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    /// An iterative kernel stopped before reaching its tolerance. `last` is the
    /// final estimate it produced.
    #[error("numeric failure in {what}: no convergence after {iterations} iterations (last estimate {last})")]
    NumericFailure {
        what: &'static str,
        iterations: usize,
        last: f64,
    },
    #[error("model generation failed: {0}")]
    GenerationFailure(String),
    #[error("Neumann series diverges: deviation statistic {a_stat} >= 1")]
    Divergence { a_stat: f64 },
    #[error("sampling operator is not injective on the tangent space (smallest eigenvalue {lambda_min})")]
    InjectivityFailure { lambda_min: f64 },
    #[error("iteration did not converge after {iterations} steps (residual {residual})")]
    NonConvergence { iterations: usize, residual: f64 },
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! invalid {
    ($($arg:tt)*) => {
        $crate::error::Error::InvalidParameter(alloc::format!($($arg)*))
    };
}
pub(crate) use invalid;
