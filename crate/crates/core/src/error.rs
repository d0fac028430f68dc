use thiserror::Error;

/// Errors raised by the estimators, solvers and data pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    Shape {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{solver} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("{solver} diverged at iteration {iteration}: {detail}")]
    Divergence {
        solver: &'static str,
        iteration: usize,
        detail: String,
    },

    #[error("SIR integration failed at day {day}: {detail}")]
    Integration { day: usize, detail: String },

    #[error("missing required column `{0}`")]
    MissingColumn(String),

    #[error("line {line}: {detail}")]
    Parse { line: u64, detail: String },

    #[error("country {country}: {reason}")]
    Country { country: String, reason: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn check_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Shape {
            context,
            expected,
            found,
        })
    }
}
