//! Crate-wide error type.
//!
//! Stage errors carry enough context to point at the offending input (the
//! uncoverable POIs of a split, the blocking slot of a sequence fabrication,
//! the diverging player of the adversarial game) so that a failed pipeline
//! run can name its stage precisely.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Interaction filtering removed every user or every POI.
    #[error("dataset exhausted: {0}")]
    DatasetExhausted(String),

    /// A split pool cannot cover the full POI universe.
    #[error("coverage constraint unsatisfiable for {pool}: uncoverable POIs {uncoverable:?}")]
    Coverage {
        pool: &'static str,
        uncoverable: Vec<usize>,
    },

    /// Two collaborating parties disagree on structure (dimensions, reference
    /// sets, group membership).
    #[error("protocol error: {0}")]
    Protocol(String),

    /// Training produced a non-finite loss.
    #[error("divergence in {what} at epoch {epoch}")]
    Divergence { what: &'static str, epoch: usize },

    /// Shadow-sequence fabrication could not fill a slot.
    #[error("fabrication infeasible at slot {slot}: {reason}")]
    Fabrication { slot: usize, reason: String },

    /// The requested knowledge is not exported under the active protocol.
    #[error("knowledge access denied: {0}")]
    AccessDenied(String),

    /// Malformed configuration or config override.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed snapshot or store content.
    #[error("format error: {0}")]
    Format(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn protocol(msg: impl Into<String>) -> Self {
        Error::Protocol(msg.into())
    }

    /// Process exit code for the CLI: config problems and bad inputs are
    /// distinguished from mid-pipeline stage failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidInput(_) => 2,
            _ => 3,
        }
    }
}
