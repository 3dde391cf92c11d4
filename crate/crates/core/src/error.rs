use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("carrier {carrier_hz} Hz must lie strictly between 0 and the Nyquist frequency {nyquist_hz} Hz")]
    CarrierOutOfRange { carrier_hz: f64, nyquist_hz: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown window kind `{0}`")]
    UnknownWindow(String),

    #[error("insufficient frames: need at least {needed}, got {got}")]
    InsufficientFrames { needed: usize, got: usize },

    #[error("calibration curve is not monotone; offending points (snr_db, variation): {}", format_points(.0))]
    NonMonotone(Vec<(f64, f64)>),

    #[error("calibration table mismatch: {0}")]
    TableMismatch(String),

    #[error("calibration table parse error at line {line}: {message}")]
    TableParse { line: usize, message: String },

    #[error("unsupported sample rate {0} Hz")]
    UnsupportedRate(f64),

    #[error("unstable calibration signal: slow level variance {variance_db2:.3} dB^2 over the stability window")]
    UnstableSignal { variance_db2: f64 },

    #[error("reference level {0} dB is not an allowed calibration level")]
    InvalidReference(f64),

    #[error("audio format error in {path:?}: {message}")]
    Format { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn format_points(points: &[(f64, f64)]) -> String {
    points
        .iter()
        .map(|(snr, v)| format!("({snr}, {v:.6e})"))
        .collect::<Vec<_>>()
        .join(", ")
}

pub type Result<T> = std::result::Result<T, Error>;
