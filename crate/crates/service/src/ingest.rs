//! Audio sources feeding the engine in capture order.
//!
//! A WAV file is resampled to the work rate and delivered in hop-sized
//! blocks, optionally paced at real time. The live adapter reads mono
//! little-endian `f32` samples at the work rate from any byte stream, which
//! is how a capture process (`arecord -f FLOAT_LE -r 44100 -c 1`, `sox -d`)
//! is attached through stdin.

use std::io::{self, Read};
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use log::{info, warn};
use phasevox::wav::{self, WORK_SAMPLE_RATE_HZ};

use crate::engine::Input;
use crate::error::{Result, ServiceError};

#[derive(Clone, Debug, PartialEq)]
pub enum Source {
    File { path: PathBuf, realtime: bool },
    /// Raw `f32` little-endian mono on stdin.
    Stdin,
}

impl Source {
    /// `-` selects stdin; anything else is a WAV path.
    pub fn parse(input: &str, realtime: bool) -> Self {
        if input == "-" {
            Self::Stdin
        } else {
            Self::File { path: PathBuf::from(input), realtime }
        }
    }
}

/// Splits `samples` into blocks of at most `block` samples.
pub fn blocks(samples: &[f64], block: usize) -> impl Iterator<Item = &[f64]> {
    samples.chunks(block.max(1))
}

/// Loads a WAV file at the work rate; any PCM format is converted.
pub fn load_file(path: &Path) -> Result<Vec<f64>> {
    if !path.exists() {
        return Err(ServiceError::Input(format!("{} does not exist", path.display())));
    }
    Ok(wav::load_resampled(path, WORK_SAMPLE_RATE_HZ)?.samples)
}

/// Sends `samples` then end-of-input. Stops early if the engine is gone.
pub fn feed(samples: &[f64], block: usize, realtime: bool, sample_rate_hz: f64, input: &mpsc::Sender<Input>) {
    let started = Instant::now();
    let mut sent = 0usize;
    for chunk in blocks(samples, block) {
        if realtime {
            let due = started + Duration::from_secs_f64(sent as f64 / sample_rate_hz);
            if let Some(wait) = due.checked_duration_since(Instant::now()) {
                thread::sleep(wait);
            }
        }
        if input.send(Input::Audio(chunk.to_vec())).is_err() {
            return;
        }
        sent += chunk.len();
    }
    let _ = input.send(Input::EndOfInput);
}

/// Reads `f32` little-endian samples until end of stream.
pub fn read_f32le(reader: &mut impl Read, block: usize, input: &mpsc::Sender<Input>) -> io::Result<()> {
    let mut bytes = vec![0u8; block.max(1) * 4];
    let mut pending = 0usize;
    loop {
        let n = reader.read(&mut bytes[pending..])?;
        if n == 0 {
            if !pending.is_multiple_of(4) {
                warn!("dropping {} trailing bytes", pending % 4);
            }
            let samples = decode(&bytes[..pending - pending % 4]);
            if !samples.is_empty() {
                let _ = input.send(Input::Audio(samples));
            }
            let _ = input.send(Input::EndOfInput);
            return Ok(());
        }
        pending += n;
        if pending == bytes.len() {
            if input.send(Input::Audio(decode(&bytes))).is_err() {
                return Ok(());
            }
            pending = 0;
        }
    }
}

fn decode(bytes: &[u8]) -> Vec<f64> {
    bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect()
}

/// Starts delivering `source` on its own thread once `start` fires (or its
/// sender is dropped).
pub fn spawn(
    source: Source,
    block: usize,
    sample_rate_hz: f64,
    input: mpsc::Sender<Input>,
    start: mpsc::Receiver<()>,
) -> Result<thread::JoinHandle<()>> {
    let samples = match &source {
        Source::File { path, .. } => Some(load_file(path)?),
        Source::Stdin => None,
    };
    let handle = thread::Builder::new().name("ingest".into()).spawn(move || {
        let _ = start.recv();
        match (source, samples) {
            (Source::File { path, realtime }, Some(samples)) => {
                info!("streaming {} ({:.2} s)", path.display(), samples.len() as f64 / sample_rate_hz);
                feed(&samples, block, realtime, sample_rate_hz, &input);
            }
            _ => {
                info!("reading f32le samples from stdin");
                if let Err(e) = read_f32le(&mut io::stdin().lock(), block, &input) {
                    warn!("stdin: {e}");
                    let _ = input.send(Input::EndOfInput);
                }
            }
        }
    })?;
    Ok(handle)
}
