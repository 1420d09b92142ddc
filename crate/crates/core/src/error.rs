use thiserror::Error;

use crate::grid::ScalarField;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// Iterative numerics gave up; `residual` is the last measured residual.
    #[error("numeric failure: {msg} (residual {residual:.3e})")]
    Numeric { msg: String, residual: f64 },

    /// Damped Newton hit its damping floor or iteration cap.
    #[error("nonconvergence after {iters} iterations: {msg} (residual {residual:.3e})")]
    NonConvergence {
        msg: String,
        iters: usize,
        residual: f64,
        last: Box<ScalarField>,
    },

    #[error("parse error at byte {offset}: {msg}")]
    Parse { offset: usize, msg: String },

    #[error("evaluation error at byte {offset}: {msg}")]
    Eval { offset: usize, msg: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn pre(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
