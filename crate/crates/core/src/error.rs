use thiserror::Error;

/// Errors produced by the clickchoice library.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid argument or malformed input data.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A record whose timestamp (or similarly fatal field) could not be parsed.
    /// Carries the source location so the offending line can be fixed.
    #[error("{path}:{line}: {message}")]
    BadRecord {
        path: String,
        line: usize,
        message: String,
    },

    /// The constrained maximum-likelihood solver failed to converge.
    #[error("solver failure: {0}")]
    Solver(String),

    /// A numerical failure outside the solver (e.g. every EM chain failed).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A JSON document with an unsupported schema version.
    #[error("unsupported schema version {found}, expected {expected}")]
    SchemaVersion { found: u32, expected: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
