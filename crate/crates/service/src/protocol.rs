//! JSON messages exchanged over the WebSocket, one per message, tagged by a
//! `type` field. Frames carry the [`AnalysisFrame`] fields at top level.

use std::path::PathBuf;

use phasevox::level::CalibrationState;
use phasevox::pipeline::AnalysisFrame;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

/// Button and popup names as shown to the user.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CommandName {
    #[serde(rename = "REC.START")]
    RecStart,
    #[serde(rename = "SAVE.WORK")]
    SaveWork,
    #[serde(rename = "STOP")]
    Stop,
    #[serde(rename = "PLAY.WORK")]
    PlayWork,
    #[serde(rename = "PLAY.REF")]
    PlayRef,
    #[serde(rename = "QUIT")]
    Quit,
    #[serde(rename = "SET.WORK")]
    SetWork,
    #[serde(rename = "LOAD.REF")]
    LoadRef,
    #[serde(rename = "Cal.Voice")]
    CalVoice,
    #[serde(rename = "CAL.Ref")]
    CalRef,
    #[serde(rename = "CAL.LEVEL")]
    CalibrationLevel,
}

impl CommandName {
    pub const ALL: [CommandName; 11] = [
        Self::RecStart,
        Self::SaveWork,
        Self::Stop,
        Self::PlayWork,
        Self::PlayRef,
        Self::Quit,
        Self::SetWork,
        Self::LoadRef,
        Self::CalVoice,
        Self::CalRef,
        Self::CalibrationLevel,
    ];
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command")]
pub enum Command {
    #[serde(rename = "REC.START")]
    RecStart,
    #[serde(rename = "SAVE.WORK")]
    SaveWork,
    #[serde(rename = "STOP")]
    Stop,
    #[serde(rename = "PLAY.WORK")]
    PlayWork,
    #[serde(rename = "PLAY.REF")]
    PlayRef,
    #[serde(rename = "QUIT")]
    Quit,
    #[serde(rename = "SET.WORK")]
    SetWork { path: PathBuf },
    #[serde(rename = "LOAD.REF")]
    LoadRef { path: PathBuf },
    #[serde(rename = "Cal.Voice")]
    CalVoice,
    #[serde(rename = "CAL.Ref")]
    CalRef,
    /// Calibration popup selection.
    #[serde(rename = "CAL.LEVEL")]
    SetCalibrationLevel { level_db: f64 },
}

impl Command {
    pub fn name(&self) -> CommandName {
        match self {
            Self::RecStart => CommandName::RecStart,
            Self::SaveWork => CommandName::SaveWork,
            Self::Stop => CommandName::Stop,
            Self::PlayWork => CommandName::PlayWork,
            Self::PlayRef => CommandName::PlayRef,
            Self::Quit => CommandName::Quit,
            Self::SetWork { .. } => CommandName::SetWork,
            Self::LoadRef { .. } => CommandName::LoadRef,
            Self::CalVoice => CommandName::CalVoice,
            Self::CalRef => CommandName::CalRef,
            Self::SetCalibrationLevel { .. } => CommandName::CalibrationLevel,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Monitoring,
    Stopped,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationSource {
    Voice,
    Reference,
    Config,
}

/// Session state as seen by clients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub mode: Mode,
    pub work_directory: Option<PathBuf>,
    pub reference: Option<PathBuf>,
    pub buffered_s: f64,
    pub calibration: Option<CalibrationState>,
    pub calibration_source: Option<CalibrationSource>,
    pub calibration_level_db: f64,
    pub last_saved: Option<PathBuf>,
    /// Commands accepted in the current state.
    pub available: Vec<CommandName>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Hello {
        schema_version: u32,
        sample_rate_hz: f64,
        hop_samples: usize,
        state: SessionSnapshot,
    },
    Frame(AnalysisFrame),
    Ack {
        command: CommandName,
        state: SessionSnapshot,
    },
    Rejected {
        command: CommandName,
        reason: String,
        state: SessionSnapshot,
    },
    /// Broadcast after any accepted command.
    State { state: SessionSnapshot },
    /// The file input has been fully analyzed.
    EndOfStream { frames: u64 },
    Error { message: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Subscribe {
        /// Frames per second wanted; all frames when absent.
        #[serde(default)]
        fps: Option<f64>,
        #[serde(default)]
        phase_maps: bool,
    },
    Control {
        #[serde(flatten)]
        command: Command,
    },
}

/// Keeps every `n`-th frame so that roughly `fps` frames per second remain.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Decimation {
    every: u64,
}

impl Decimation {
    pub fn all() -> Self {
        Self { every: 1 }
    }

    pub fn for_fps(fps: Option<f64>, frame_rate: f64) -> Self {
        let every = match fps {
            Some(fps) if fps > 0.0 && fps < frame_rate => (frame_rate / fps).round().max(1.0) as u64,
            _ => 1,
        };
        Self { every }
    }

    pub fn every(&self) -> u64 {
        self.every
    }

    /// `frame_number` counts hops from the start of the stream.
    pub fn keeps(&self, frame_number: u64) -> bool {
        frame_number.is_multiple_of(self.every)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn control_messages_parse() {
        let stop: ClientMessage = serde_json::from_str(r#"{"type":"control","command":"STOP"}"#).unwrap();
        assert_eq!(stop, ClientMessage::Control { command: Command::Stop });
        let set: ClientMessage =
            serde_json::from_str(r#"{"type":"control","command":"SET.WORK","path":"/tmp/w"}"#).unwrap();
        assert_eq!(set, ClientMessage::Control { command: Command::SetWork { path: "/tmp/w".into() } });
        let level: ClientMessage =
            serde_json::from_str(r#"{"type":"control","command":"CAL.LEVEL","level_db":75}"#).unwrap();
        assert_eq!(level, ClientMessage::Control { command: Command::SetCalibrationLevel { level_db: 75.0 } });
        let voice: ClientMessage = serde_json::from_str(r#"{"type":"control","command":"Cal.Voice"}"#).unwrap();
        assert_eq!(voice, ClientMessage::Control { command: Command::CalVoice });
        assert!(serde_json::from_str::<ClientMessage>(r#"{"type":"control","command":"EJECT"}"#).is_err());
    }

    #[test]
    fn subscribe_defaults() {
        let sub: ClientMessage = serde_json::from_str(r#"{"type":"subscribe"}"#).unwrap();
        assert_eq!(sub, ClientMessage::Subscribe { fps: None, phase_maps: false });
    }

    #[test]
    fn names_serialize_as_buttons() {
        let names: Vec<String> = CommandName::ALL
            .iter()
            .map(|n| serde_json::to_string(n).unwrap().trim_matches('"').to_string())
            .collect();
        assert_eq!(
            names,
            [
                "REC.START", "SAVE.WORK", "STOP", "PLAY.WORK", "PLAY.REF", "QUIT", "SET.WORK", "LOAD.REF",
                "Cal.Voice", "CAL.Ref", "CAL.LEVEL"
            ]
        );
        for command in [Command::Stop, Command::LoadRef { path: "r.wav".into() }] {
            let text = serde_json::to_string(&command).unwrap();
            let name: String = serde_json::to_string(&command.name()).unwrap();
            assert!(text.contains(&name), "{text}");
        }
    }

    #[test]
    fn decimation() {
        let quarter = Decimation::for_fps(Some(50.0), 200.0);
        assert_eq!(quarter.every(), 4);
        let kept: Vec<u64> = (0..12).filter(|&i| quarter.keeps(i)).collect();
        assert_eq!(kept, vec![0, 4, 8]);
        assert_eq!(Decimation::for_fps(None, 200.0), Decimation::all());
        assert_eq!(Decimation::for_fps(Some(500.0), 200.0).every(), 1);
        assert_eq!(Decimation::for_fps(Some(0.0), 200.0).every(), 1);
        assert_eq!(Decimation::for_fps(Some(30.0), 200.45).every(), 7);
    }
}
