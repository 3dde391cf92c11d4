//! WAV input (any PCM or float layout via `hound`) and canonical 24-bit mono
//! PCM output, plus sample-rate conversion for ingest.

use std::io::{Read, Write};
use std::path::Path;

use rubato::{FftFixedIn, Resampler};

use crate::error::{Error, Result};

pub const WORK_SAMPLE_RATE_HZ: u32 = 44_100;
/// Size of the canonical RIFF/WAVE header written by [`encode_wav_24`].
pub const CANONICAL_HEADER_BYTES: usize = 44;

const FULL_SCALE_24: f64 = 8_388_608.0;

/// Mono audio with samples in `[-1, 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Audio {
    pub samples: Vec<f64>,
    pub sample_rate_hz: u32,
}

impl Audio {
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }
}

fn format_error(path: &Path, message: impl ToString) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

/// Reads any PCM or IEEE-float WAV file, averaging channels to mono.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Audio> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    read_wav_from(std::io::BufReader::new(file)).map_err(|e| match e {
        Error::Format { message, .. } => format_error(path, message),
        other => other,
    })
}

pub fn read_wav_from<R: Read>(reader: R) -> Result<Audio> {
    let here = Path::new("<stream>");
    let reader = hound::WavReader::new(reader).map_err(|e| format_error(here, e))?;
    let spec = reader.spec();
    let channels = spec.channels.max(1) as usize;
    let interleaved: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>(),
        hound::SampleFormat::Int => {
            let scale = 2f64.powi(spec.bits_per_sample as i32 - 1);
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<std::result::Result<_, _>>()
        }
    }
    .map_err(|e| format_error(here, e))?;
    let samples = interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    Ok(Audio {
        samples,
        sample_rate_hz: spec.sample_rate,
    })
}

/// Nearest 24-bit code for a sample, saturating at full scale.
pub fn quantize_24(sample: f64) -> i32 {
    (sample * FULL_SCALE_24)
        .round()
        .clamp(-FULL_SCALE_24, FULL_SCALE_24 - 1.0) as i32
}

/// Value represented by a 24-bit code.
pub fn dequantize_24(code: i32) -> f64 {
    code as f64 / FULL_SCALE_24
}

/// Canonical 44-byte-header RIFF/WAVE, PCM, mono, 24-bit little endian.
pub fn encode_wav_24(samples: &[f64], sample_rate_hz: u32) -> Vec<u8> {
    let data_len = samples.len() * 3;
    let mut out = Vec::with_capacity(CANONICAL_HEADER_BYTES + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&sample_rate_hz.to_le_bytes());
    out.extend_from_slice(&(sample_rate_hz * 3).to_le_bytes());
    out.extend_from_slice(&3u16.to_le_bytes()); // block align
    out.extend_from_slice(&24u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in samples {
        out.extend_from_slice(&quantize_24(s).to_le_bytes()[..3]);
    }
    out
}

/// Writes [`encode_wav_24`] output, failing if `path` already exists.
pub fn write_wav_24(path: impl AsRef<Path>, samples: &[f64], sample_rate_hz: u32) -> Result<()> {
    let mut file = std::fs::OpenOptions::new()
        .write(true)
        .create_new(true)
        .open(path)?;
    file.write_all(&encode_wav_24(samples, sample_rate_hz))?;
    file.sync_all()?;
    Ok(())
}

/// Band-limited sample-rate conversion of a whole buffer. The output is
/// delay-compensated and has `round(len * to / from)` samples.
pub fn resample(samples: &[f64], from_hz: u32, to_hz: u32) -> Result<Vec<f64>> {
    if from_hz == 0 || to_hz == 0 {
        return Err(Error::InvalidParameter("sample rates must be positive".into()));
    }
    if from_hz == to_hz {
        return Ok(samples.to_vec());
    }
    let chunk = 1024;
    let mut resampler = FftFixedIn::<f64>::new(from_hz as usize, to_hz as usize, chunk, 2, 1)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let expected = (samples.len() as f64 * to_hz as f64 / from_hz as f64).round() as usize;
    let delay = resampler.output_delay();
    let mut out = Vec::with_capacity(expected + delay + chunk);
    let mut blocks = samples.chunks_exact(chunk);
    for block in blocks.by_ref() {
        let produced = resampler
            .process(&[block], None)
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        out.extend_from_slice(&produced[0]);
    }
    let tail = blocks.remainder();
    let produced = resampler
        .process_partial(Some(&[tail]), None)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    out.extend_from_slice(&produced[0]);
    while out.len() < expected + delay {
        let produced = resampler
            .process_partial::<&[f64]>(None, None)
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        if produced[0].is_empty() {
            break;
        }
        out.extend_from_slice(&produced[0]);
    }
    out.drain(..delay.min(out.len()));
    out.resize(expected, 0.0);
    Ok(out)
}

/// Reads a WAV file and converts it to `target_rate_hz` if needed.
pub fn load_resampled(path: impl AsRef<Path>, target_rate_hz: u32) -> Result<Audio> {
    let audio = read_wav(path)?;
    if audio.sample_rate_hz == target_rate_hz {
        return Ok(audio);
    }
    Ok(Audio {
        samples: resample(&audio.samples, audio.sample_rate_hz, target_rate_hz)?,
        sample_rate_hz: target_rate_hz,
    })
}
