use thiserror::Error;

use crate::linesearch::TrialSummary;

pub type Result<T, E = SolverError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("not available: {0}")]
    NotAvailable(String),

    #[error("numerical breakdown at iteration {iteration}: {detail}")]
    NumericalBreakdown { iteration: usize, detail: String },

    #[error("line search failed after {backtracks} backtracks (last trial: {last:?})")]
    LineSearchFailure {
        backtracks: usize,
        last: Option<TrialSummary>,
    },

    #[error("parse error on line {line}: {detail}")]
    Parse { line: usize, detail: String },

    #[error("format error on line {line}: {detail}")]
    Format { line: usize, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl SolverError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        SolverError::InvalidArgument(msg.into())
    }
}
