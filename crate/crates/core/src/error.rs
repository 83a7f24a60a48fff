use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A malformed CSV cell or header. `row` is the 1-based data row
    /// (the header is row 0).
    #[error("csv error at row {row}, column {column}: {message}")]
    Csv {
        row: usize,
        column: String,
        message: String,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),

    #[error("could not build label-balanced folds after {attempts} permutations")]
    FoldSplit { attempts: usize },

    #[error("quadrature did not reach tolerance {tolerance:e} (error estimate {estimate:e})")]
    Quadrature { tolerance: f64, estimate: f64 },

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error("linear program is infeasible")]
    Infeasible,

    #[error("solver did not converge after {iterations} iterations: {detail}")]
    NonConvergence { iterations: usize, detail: String },

    #[error("degenerate variance estimate {value:e}")]
    DegenerateVariance { value: f64 },

    #[error("{excluded} of {total} replicates failed, above the 5% limit")]
    TooManyExclusions { excluded: usize, total: usize },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for failures caused by the numbers rather than by the inputs'
    /// shape or contents.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Quadrature { .. }
                | Error::Eigen(_)
                | Error::Infeasible
                | Error::NonConvergence { .. }
                | Error::DegenerateVariance { .. }
                | Error::TooManyExclusions { .. }
        )
    }
}
