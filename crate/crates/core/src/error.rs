use thiserror::Error;

/// Errors shared across the library.
#[derive(Debug, Error)]
pub enum EmError {
    /// A domain-type invariant or operation precondition was violated.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A linear subsystem that must be inverted is numerically singular.
    #[error("singular subsystem `{context}` (condition number ~{cond:.3e})")]
    Singular { context: String, cond: f64 },

    /// Two wire volumes intersect; mutual impedance is undefined.
    #[error("overlapping elements: {0}")]
    Overlap(String),

    /// Reconstruction query outside the usable grid footprint.
    #[error("query point ({x}, {y}) outside the guarded grid footprint")]
    OutOfBand { x: f64, y: f64 },

    /// Scenario / config file problem.
    #[error("config error: {0}")]
    Config(String),

    /// I/O failure while reading or writing artifacts.
    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// JSON (de)serialization failure.
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl EmError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        EmError::InvalidInput(msg.into())
    }
}
