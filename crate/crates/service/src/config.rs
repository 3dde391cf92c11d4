//! Session config file: one `key = value` per line, `#` comments.
//!
//! Recognized keys are `work_directory`, `reference`, `salience_threshold_db`,
//! `hop_ms`, `calibration_level_db`, and the stored calibration
//! (`calibration_offset_db`, `calibration_reference_spl_db`,
//! `calibration_timestamp`).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use phasevox::f0::DEFAULT_SALIENCE_THRESHOLD_DB;
use phasevox::level::CalibrationState;

use crate::error::{Result, ServiceError};

pub const DEFAULT_HOP_MS: f64 = 5.0;
pub const DEFAULT_CALIBRATION_LEVEL_DB: f64 = 70.0;

#[derive(Clone, Debug, PartialEq)]
pub struct SessionConfig {
    pub work_directory: Option<PathBuf>,
    pub reference: Option<PathBuf>,
    pub salience_threshold_db: f64,
    pub hop_ms: f64,
    /// Level selected in the calibration popup.
    pub calibration_level_db: f64,
    pub calibration: Option<CalibrationState>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            work_directory: None,
            reference: None,
            salience_threshold_db: DEFAULT_SALIENCE_THRESHOLD_DB,
            hop_ms: DEFAULT_HOP_MS,
            calibration_level_db: DEFAULT_CALIBRATION_LEVEL_DB,
            calibration: None,
        }
    }
}

impl SessionConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = Self::default();
        let mut offset = None;
        let mut reference_spl = None;
        let mut timestamp = None;
        for (index, raw) in text.lines().enumerate() {
            let line = index + 1;
            let content = raw.trim();
            if content.is_empty() || content.starts_with('#') {
                continue;
            }
            let err = |message: String| ServiceError::Config { line, message };
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{content}`")))?;
            let (key, value) = (key.trim(), value.trim());
            let number = || {
                value
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| err(format!("{key}: `{value}` is not a number")))
            };
            match key {
                "work_directory" => config.work_directory = non_empty(value).map(PathBuf::from),
                "reference" => config.reference = non_empty(value).map(PathBuf::from),
                "salience_threshold_db" => config.salience_threshold_db = number()?,
                "hop_ms" => {
                    let hop = number()?;
                    if hop.is_nan() || hop <= 0.0 {
                        return Err(err("hop_ms must be positive".into()));
                    }
                    config.hop_ms = hop;
                }
                "calibration_level_db" => config.calibration_level_db = number()?,
                "calibration_offset_db" => offset = Some(number()?),
                "calibration_reference_spl_db" => reference_spl = Some(number()?),
                "calibration_timestamp" => timestamp = Some(value.to_string()),
                other => return Err(err(format!("unknown key `{other}`"))),
            }
        }
        config.calibration = match (offset, reference_spl) {
            (Some(offset_db), Some(reference_spl_db)) => Some(CalibrationState {
                offset_db,
                reference_spl_db,
                timestamp: timestamp.unwrap_or_default(),
            }),
            (None, None) => None,
            _ => {
                return Err(ServiceError::Config {
                    line: 0,
                    message: "calibration_offset_db and calibration_reference_spl_db go together".into(),
                })
            }
        };
        Ok(config)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let _ = writeln!(out, "work_directory = {}", path(&self.work_directory));
        let _ = writeln!(out, "reference = {}", path(&self.reference));
        let _ = writeln!(out, "salience_threshold_db = {}", self.salience_threshold_db);
        let _ = writeln!(out, "hop_ms = {}", self.hop_ms);
        let _ = writeln!(out, "calibration_level_db = {}", self.calibration_level_db);
        if let Some(c) = &self.calibration {
            let _ = writeln!(out, "calibration_offset_db = {}", c.offset_db);
            let _ = writeln!(out, "calibration_reference_spl_db = {}", c.reference_spl_db);
            let _ = writeln!(out, "calibration_timestamp = {}", c.timestamp);
        }
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

fn non_empty(value: &str) -> Option<&str> {
    (!value.is_empty()).then_some(value)
}
