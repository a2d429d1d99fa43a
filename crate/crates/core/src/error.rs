use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or input lies outside its admissible range.
    #[error("domain error: {0}")]
    Domain(String),

    /// The finite-element system could not be solved.
    #[error("solver error: {0}")]
    Solver(String),

    /// Malformed or incompatible input (dimensions, non-finite values, mismatched targets).
    #[error("input error: {0}")]
    Input(String),

    #[error("stratification error: {0}")]
    Stratification(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
