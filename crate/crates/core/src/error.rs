use thiserror::Error;

/// Errors raised by the solvers, smoothers and I/O layer.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("sampling exhausted after {attempts} rejected draws (radius {eps:e})")]
    SamplingExhausted { attempts: usize, eps: f64 },

    #[error("degenerate design: all covariate values are identical")]
    DegenerateDesign,

    #[error("log-likelihood is infeasible at the requested point")]
    InfeasiblePoint,

    #[error("functional undefined at observation {index}: shape {kappa} >= 1")]
    FunctionalUndefined { index: usize, kappa: f64 },

    #[error("singular jacobian block at observation {index} (|det| = {det:e})")]
    SingularBlock { index: usize, det: f64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("invalid config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
