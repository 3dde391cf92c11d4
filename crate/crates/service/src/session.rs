//! Session state owned by the engine: mode, input buffer, work directory,
//! reference audio and level calibration.
//!
//! ```text
//!            STOP
//! monitoring ----> stopped
//!     ^               |
//!     +---------------+
//!         REC.START (clears buffers)
//! ```
//!
//! PLAY.WORK and PLAY.REF need the stopped mode; Cal.Voice and CAL.Ref need
//! monitoring with a full stability window of level readings.

use std::collections::VecDeque;
use std::path::{Path, PathBuf};

use log::{info, warn};
use phasevox::level::{calibrate_spl, CalibrationPolicy, CalibrationState};
use phasevox::pipeline::AnalysisFrame;
use phasevox::wav::{self, Audio, WORK_SAMPLE_RATE_HZ};

use crate::config::SessionConfig;
use crate::error::Result;
use crate::playback::Playback;
use crate::protocol::{CalibrationSource, Command, CommandName, Mode, SessionSnapshot};
use crate::ring::{RingBuffer, RING_SECONDS};

/// What the engine has to do after an accepted command.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Outcome {
    /// Analysis restarts from an empty stream.
    pub restart: bool,
    pub calibration: Option<CalibrationState>,
    pub quit: bool,
    pub saved: Option<PathBuf>,
}

pub struct Session {
    mode: Mode,
    ring: RingBuffer,
    sample_rate_hz: f64,
    work_directory: Option<PathBuf>,
    reference: Option<(PathBuf, Audio)>,
    calibration: Option<CalibrationState>,
    calibration_source: Option<CalibrationSource>,
    calibration_level_db: f64,
    policy: CalibrationPolicy,
    // Slow C-weighted readings over the stability window, newest last.
    slow_levels: VecDeque<f64>,
    stability_frames: usize,
    last_saved: Option<PathBuf>,
    playback: Box<dyn Playback>,
    base_config: SessionConfig,
    config_path: Option<PathBuf>,
}

impl Session {
    pub fn new(
        config: SessionConfig,
        config_path: Option<PathBuf>,
        sample_rate_hz: f64,
        frame_rate_hz: f64,
        playback: Box<dyn Playback>,
    ) -> Result<Self> {
        let policy = CalibrationPolicy::default();
        let reference = match &config.reference {
            Some(path) => Some((path.clone(), wav::load_resampled(path, WORK_SAMPLE_RATE_HZ)?)),
            None => None,
        };
        Ok(Self {
            mode: Mode::Monitoring,
            ring: RingBuffer::with_duration(RING_SECONDS, sample_rate_hz),
            sample_rate_hz,
            work_directory: config.work_directory.clone(),
            reference,
            calibration: config.calibration.clone(),
            calibration_source: config.calibration.as_ref().map(|_| CalibrationSource::Config),
            calibration_level_db: config.calibration_level_db,
            stability_frames: (policy.stability_window_s * frame_rate_hz).round().max(1.0) as usize,
            policy,
            slow_levels: VecDeque::new(),
            last_saved: None,
            playback,
            base_config: config,
            config_path,
        })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn is_monitoring(&self) -> bool {
        self.mode == Mode::Monitoring
    }

    pub fn calibration(&self) -> Option<&CalibrationState> {
        self.calibration.as_ref()
    }

    pub fn buffer(&self) -> &RingBuffer {
        &self.ring
    }

    /// Buffers captured input; ignored while stopped.
    pub fn record(&mut self, block: &[f64]) {
        if self.is_monitoring() {
            self.ring.push(block);
        }
    }

    /// Tracks the slow level for the calibration stability check.
    pub fn observe(&mut self, frame: &AnalysisFrame) {
        if self.slow_levels.len() == self.stability_frames {
            self.slow_levels.pop_front();
        }
        self.slow_levels.push_back(frame.level.dbfs_c_slow);
    }

    pub fn available(&self) -> Vec<CommandName> {
        CommandName::ALL
            .into_iter()
            .filter(|name| self.check(*name).is_ok())
            .collect()
    }

    fn check(&self, name: CommandName) -> std::result::Result<(), String> {
        let stopped = self.mode == Mode::Stopped;
        let require = |ok: bool, why: &str| if ok { Ok(()) } else { Err(why.to_string()) };
        match name {
            CommandName::RecStart => require(stopped, "already monitoring"),
            CommandName::Stop => require(!stopped, "already stopped"),
            CommandName::SaveWork => {
                require(self.work_directory.is_some(), "no work directory set")?;
                require(!self.ring.is_empty(), "input buffer is empty")
            }
            CommandName::PlayWork => {
                require(stopped, "playback needs the stopped mode")?;
                require(!self.ring.is_empty(), "input buffer is empty")
            }
            CommandName::PlayRef => {
                require(stopped, "playback needs the stopped mode")?;
                require(self.reference.is_some(), "no reference loaded")
            }
            CommandName::CalVoice | CommandName::CalRef => {
                require(!stopped, "calibration needs live input")?;
                require(
                    self.slow_levels.len() >= self.stability_frames,
                    "not enough level history yet",
                )
            }
            CommandName::Quit | CommandName::SetWork | CommandName::LoadRef | CommandName::CalibrationLevel => Ok(()),
        }
    }

    /// Applies `command` or explains why it is not valid now.
    pub fn apply(&mut self, command: &Command) -> std::result::Result<Outcome, String> {
        self.check(command.name())?;
        let mut outcome = Outcome::default();
        match command {
            Command::RecStart => {
                self.ring.clear();
                self.slow_levels.clear();
                self.mode = Mode::Monitoring;
                outcome.restart = true;
            }
            Command::Stop => {
                self.playback.stop();
                self.mode = Mode::Stopped;
            }
            Command::SaveWork => {
                let dir = self.work_directory.clone().expect("checked");
                let path = save_work(&dir, &self.ring.to_vec()).map_err(|e| e.to_string())?;
                info!("saved {}", path.display());
                self.last_saved = Some(path.clone());
                outcome.saved = Some(path);
            }
            Command::PlayWork => self.playback.play(&self.ring.to_vec(), self.sample_rate_hz as u32),
            Command::PlayRef => {
                let (_, audio) = self.reference.as_ref().expect("checked");
                self.playback.play(&audio.samples, audio.sample_rate_hz);
            }
            Command::Quit => {
                self.playback.stop();
                outcome.quit = true;
            }
            Command::SetWork { path } => {
                if !path.is_dir() {
                    return Err(format!("{} is not a directory", path.display()));
                }
                self.work_directory = Some(path.clone());
                self.persist();
            }
            Command::LoadRef { path } => {
                let audio = wav::load_resampled(path, WORK_SAMPLE_RATE_HZ).map_err(|e| e.to_string())?;
                self.reference = Some((path.clone(), audio));
                self.persist();
            }
            Command::CalVoice | Command::CalRef => {
                let levels: Vec<f64> = self.slow_levels.iter().copied().collect();
                let measured = *levels.last().expect("checked");
                let state = calibrate_spl(measured, self.calibration_level_db, &levels, &self.policy)
                    .map_err(|e| e.to_string())?;
                self.calibration = Some(state.clone());
                self.calibration_source = Some(if *command == Command::CalVoice {
                    CalibrationSource::Voice
                } else {
                    CalibrationSource::Reference
                });
                outcome.calibration = Some(state);
                self.persist();
            }
            Command::SetCalibrationLevel { level_db } => {
                self.policy.check_reference(*level_db).map_err(|e| e.to_string())?;
                self.calibration_level_db = *level_db;
                self.persist();
            }
        }
        Ok(outcome)
    }

    pub fn snapshot(&self) -> SessionSnapshot {
        SessionSnapshot {
            mode: self.mode,
            work_directory: self.work_directory.clone(),
            reference: self.reference.as_ref().map(|(p, _)| p.clone()),
            buffered_s: self.ring.len() as f64 / self.sample_rate_hz,
            calibration: self.calibration.clone(),
            calibration_source: self.calibration_source,
            calibration_level_db: self.calibration_level_db,
            last_saved: self.last_saved.clone(),
            available: self.available(),
        }
    }

    pub fn config(&self) -> SessionConfig {
        SessionConfig {
            work_directory: self.work_directory.clone(),
            reference: self.reference.as_ref().map(|(p, _)| p.clone()),
            calibration_level_db: self.calibration_level_db,
            calibration: self.calibration.clone(),
            ..self.base_config.clone()
        }
    }

    fn persist(&self) {
        if let Some(path) = &self.config_path {
            if let Err(e) = self.config().save(path) {
                warn!("could not write {}: {e}", path.display());
            }
        }
    }
}

/// Writes `samples` as a 24-bit work file with a timestamped name that does
/// not exist yet in `dir`.
pub fn save_work(dir: &Path, samples: &[f64]) -> phasevox::Result<PathBuf> {
    let stamp = chrono::Local::now().format("%Y%m%d_%H%M%S");
    for attempt in 0..10_000 {
        let name = if attempt == 0 {
            format!("work_{stamp}.wav")
        } else {
            format!("work_{stamp}_{attempt}.wav")
        };
        let path = dir.join(name);
        match wav::write_wav_24(&path, samples, WORK_SAMPLE_RATE_HZ) {
            Ok(()) => return Ok(path),
            Err(phasevox::Error::Io(e)) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e),
        }
    }
    Err(phasevox::Error::Io(std::io::Error::new(
        std::io::ErrorKind::AlreadyExists,
        "no free work file name",
    )))
}
