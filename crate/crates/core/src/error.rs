use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the processing chain.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("{what} at {frequency_hz} Hz exceeds the Nyquist limit of {nyquist_hz} Hz")]
    Nyquist {
        what: &'static str,
        frequency_hz: f64,
        nyquist_hz: f64,
    },

    #[error("design matrix is rank deficient (condition estimate {condition:.3e})")]
    RankDeficient { condition: f64 },

    #[error("target at {range_m:.3} m is beyond the unambiguous range ({max_range_m:.3} m)")]
    BeyondUnambiguousRange { range_m: f64, max_range_m: f64 },

    #[error("no target in range gate [{min_range_m}, {max_range_m}] m")]
    NoTarget { min_range_m: f64, max_range_m: f64 },

    #[error("no spectral peak in band [{lo_hz:.3}, {hi_hz:.3}] Hz")]
    NoPeak { lo_hz: f64, hi_hz: f64 },

    #[error("traces have no overlapping time support")]
    NoOverlap,

    #[error("truncated cube file {path}: expected {expected} bytes, found {actual}")]
    Truncated {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("malformed cube file {path}: {reason}")]
    MalformedCube { path: PathBuf, reason: String },

    #[error("row {row}: {reason}")]
    BadRow { row: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
