//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input row; carries the 1-based line number of the offender.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Timestamp that cannot be placed on the minute grid.
    #[error("grid error at line {line}: {msg}")]
    Grid { line: usize, msg: String },

    /// Not enough data to run the requested operation.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Invariant violation on an input value or configuration.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Kernel spectral radius >= 1; the process has no stationary regime.
    #[error("nonstationary model: spectral radius {spectral_radius} >= 1")]
    NonStationary { spectral_radius: f64 },

    /// Numeric failure while assembling a kernel matrix.
    #[error("kernel construction failed: {0}")]
    Construction(String),

    /// Simulation exceeded the event cap, indicating near-critical parameters.
    #[error("runaway intensity: {events} events exceeded cap {cap}; parameters are near-critical")]
    RunawayIntensity { events: usize, cap: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
