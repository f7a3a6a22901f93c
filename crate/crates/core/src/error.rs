use serde::Serialize;
use thiserror::Error;

use crate::decomposition::{Rank1Recovery, TensorRecovery};

/// Iterate left behind by a recovery that ran out of iterations.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PartialRecovery {
    Matrix(Rank1Recovery),
    Tensor(TensorRecovery),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SummaError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("labels must contain both classes (found {n_positive} positive of {n_samples})")]
    DegenerateLabels { n_positive: usize, n_samples: usize },

    #[error("rank vector is not a strict permutation of 1..=N; ties are not supported here")]
    TiesUnsupported,

    #[error("at least {required} methods are required, found {found}")]
    TooFewMethods { required: usize, found: usize },

    #[error("no rank-1 signal: {0}")]
    NoSignal(String),

    #[error("matrix is identically zero")]
    ZeroMatrix,

    #[error("iteration did not converge within {iterations} iterations")]
    NotConverged {
        iterations: usize,
        partial: Box<PartialRecovery>,
    },

    #[error("prevalence must lie strictly inside (0, 1), got {0}")]
    InvalidPrevalence(f64),
}

pub type Result<T, E = SummaError> = std::result::Result<T, E>;

impl SummaError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        SummaError::InvalidInput(msg.into())
    }
}
