use thiserror::Error;

/// Errors raised by the simulator and the closed-form evaluators.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("truncation error: {0}")]
    Truncation(String),

    #[error("leakage {leakage:.3e} exceeds {limit:.1e} at truncation dimension {dim}")]
    Leakage { leakage: f64, limit: f64, dim: usize },

    #[error("jump probability {probability:.4} exceeds {limit} per step; reduce dt")]
    StepSize { probability: f64, limit: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("generating function diverges: {0}")]
    Divergence(String),

    #[error("conditional expectation undefined: {0}")]
    UndefinedConditional(String),

    #[error("oracle mismatch: {0}")]
    OracleMismatch(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("trajectory {traj} failed at t = {time:.6}: {source}")]
    Trajectory {
        traj: u64,
        time: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// True for the numerical guards (truncation, leakage, step size), including
    /// those raised inside a trajectory.
    pub fn is_numerical_guard(&self) -> bool {
        match self {
            Error::Truncation(_) | Error::Leakage { .. } | Error::StepSize { .. } => true,
            Error::Trajectory { source, .. } => source.is_numerical_guard(),
            _ => false,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
