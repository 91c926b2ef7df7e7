use thiserror::Error;

use crate::model::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// The instance or a plan broke one of the model rules.
    #[error("validation failed: {}", format_violations(.0))]
    Validation(Vec<Violation>),

    #[error("dimension mismatch: expected {expected} sizes, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("no plan satisfies the constraints")]
    Infeasible,

    /// Search was stopped by a limit before any feasible plan was found.
    #[error("search stopped before a feasible plan was found")]
    Timeout,

    #[error("empty lot universe")]
    EmptyLotUniverse,

    #[error("brute force would enumerate {combinations} assignments (limit {limit})")]
    TooLarge { combinations: f64, limit: f64 },

    #[error("zero total demand cannot be scaled")]
    ZeroDemand,

    #[error("no usable product histories")]
    NoUsableHistories,

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn format_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}
