use thiserror::Error;

/// Errors raised by oracles, solvers and data loaders.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("oracle produced NaN in {0}")]
    NotANumber(&'static str),

    #[error("identical points: {0}")]
    IdenticalPoints(&'static str),

    #[error("invariant violated: {name} (violation {violation:e} at iteration {iteration})")]
    InvariantViolated {
        name: &'static str,
        violation: f64,
        iteration: usize,
    },

    #[error("inner solver failed at outer iteration {iteration}: {source}")]
    InnerSolver {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed matrix data: {0}")]
    Parse(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
