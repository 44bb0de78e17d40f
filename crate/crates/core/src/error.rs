//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value for {0}")]
    NonFinite(&'static str),

    #[error("swing ratio must be in (0, 1), got {0}")]
    InvalidRatio(f64),

    #[error("stride frequency must be positive and finite, got {0}")]
    InvalidFreq(f64),

    #[error("time step must be non-negative and finite, got {0}")]
    InvalidDt(f64),

    #[error("speed command {0} outside supported band [{1}, {2}] m/s")]
    SpeedOutOfBand(f64, f64, f64),

    #[error("invalid model parameters: {0}")]
    InvalidModel(String),

    #[error("invalid controller gains: {0}")]
    InvalidGains(String),

    #[error("polynomial fit needs at least {need} distinct speeds, got {got}")]
    InsufficientSpeeds { need: usize, got: usize },

    #[error("body weight must be positive, got {0}")]
    InvalidBodyWeight(f64),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("invalid sweep specification: {0}")]
    InvalidSweep(String),

    #[error("{path}: parse error at row {row}, column {col}: {msg}")]
    CsvParse {
        path: String,
        row: usize,
        col: usize,
        msg: String,
    },

    #[error("invalid dash configuration: {0}")]
    InvalidDashConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
