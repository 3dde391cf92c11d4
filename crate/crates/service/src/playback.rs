//! Audio output for PLAY.WORK and PLAY.REF.

use std::sync::{Arc, Mutex};

use log::info;

pub trait Playback: Send {
    fn play(&mut self, samples: &[f64], sample_rate_hz: u32);
    fn stop(&mut self);
}

/// Logs playback requests without producing sound.
#[derive(Debug, Default)]
pub struct LogPlayback;

impl Playback for LogPlayback {
    fn play(&mut self, samples: &[f64], sample_rate_hz: u32) {
        info!(
            "playback of {:.2} s requested",
            samples.len() as f64 / sample_rate_hz as f64
        );
    }

    fn stop(&mut self) {}
}

/// Keeps every request; clones share the log.
#[derive(Clone, Debug, Default)]
pub struct RecordingPlayback {
    played: Arc<Mutex<Vec<Vec<f64>>>>,
}

impl RecordingPlayback {
    pub fn played(&self) -> Vec<Vec<f64>> {
        self.played.lock().unwrap().clone()
    }
}

impl Playback for RecordingPlayback {
    fn play(&mut self, samples: &[f64], _sample_rate_hz: u32) {
        self.played.lock().unwrap().push(samples.to_vec());
    }

    fn stop(&mut self) {}
}
