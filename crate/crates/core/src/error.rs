//! Error type shared across the library.

use thiserror::Error;

/// Errors produced by pipeline operations.
#[derive(Debug, Error)]
pub enum Error {
    /// An input value violated an operation's contract.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A record referenced a pair id that is not present in the pairs file.
    #[error("unknown pair id: {0}")]
    UnknownPairId(String),

    /// Strict validation found violations; the report is carried for display.
    #[error("validation failed with {count} violation(s):\n{report}")]
    ValidationFailed {
        /// Number of violations found.
        count: usize,
        /// Human-readable rendering of the violations.
        report: String,
    },

    /// An allocation strategy asked for more raters than an item has.
    #[error("strategy requires {required} raters but item {item} has only {available}")]
    StrategyBounds {
        /// Item that ran out of raters.
        item: String,
        /// Raters required by the strategy.
        required: usize,
        /// Raters available in the pool.
        available: usize,
    },

    /// A line of a JSONL file failed to parse.
    #[error("{path}:{line}: {source}")]
    JsonLine {
        /// File the line came from.
        path: String,
        /// 1-based line number.
        line: usize,
        /// Underlying JSON error.
        #[source]
        source: serde_json::Error,
    },

    /// JSON (de)serialization outside of line-oriented files.
    #[error(transparent)]
    Json(#[from] serde_json::Error),

    /// Filesystem I/O.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Shorthand for [`Error::InvalidInput`] with formatted text.
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
