use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum BebError {
    /// Malformed input: wrong shapes, non-finite entries, bad spec files.
    #[error("{0}")]
    Invalid(String),
    /// A hypothesis of the requested computation fails.
    #[error("degenerate: {0}")]
    Degenerate(String),
    #[error("{what} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence {
        what: String,
        iterations: usize,
        residual: f64,
    },
    #[error("no return to the switching surface within t = {0}")]
    NoReturn(f64),
    #[error("grazing impact (velocity {velocity:.3e}) at t = {time}")]
    Grazing { time: f64, velocity: f64 },
    #[error("outside domain: {0}")]
    Domain(String),
    #[error("integration failed: {0}")]
    Integration(String),
}

impl BebError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        BebError::Invalid(msg.into())
    }

    pub fn degenerate(msg: impl Into<String>) -> Self {
        BebError::Degenerate(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        BebError::Domain(msg.into())
    }

    pub fn no_convergence(what: impl Into<String>, iterations: usize, residual: f64) -> Self {
        BebError::NoConvergence {
            what: what.into(),
            iterations,
            residual,
        }
    }

    /// True for failures of an iterative numerical method rather than of the input.
    pub fn is_numerical(&self) -> bool {
        !matches!(self, BebError::Invalid(_))
    }
}

pub type Result<T> = std::result::Result<T, BebError>;
