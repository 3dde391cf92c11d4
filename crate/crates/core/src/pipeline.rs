//! Streaming analysis: audio blocks in, timestamped [`AnalysisFrame`]s out.
//!
//! A frame is produced for every hop instant `n = 0, hop, 2 hop, ...`. The
//! filters are centered, so the frame for `n` is emitted once the look-ahead
//! beyond `n` has arrived (or at [`Analyzer::finish`], which treats the rest
//! of the stream as silence). Output does not depend on how the input is
//! split into blocks.

use serde::{Deserialize, Serialize};

use crate::envelope::{EnvelopeKind, DEFAULT_STRETCH};
use crate::error::{Error, Result};
use crate::f0::{self, F0Candidate, MAX_CANDIDATES};
use crate::filterbank::ChannelBank;
use crate::level::{CalibrationState, LevelFrame, LevelMeter};
use crate::phase::{assemble_attribute_frame, AttributeFrame};
use crate::scalar::Real;
use crate::snr::{self, CalibrationOptions, CalibrationTable, SnrTracker, TableKey};
use crate::spectrum::PowerSpectrum;

pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 44_100.0;
pub const DEFAULT_HOP_SAMPLES: usize = 220;
pub const DEFAULT_F_LO_HZ: f64 = 80.0;
pub const DEFAULT_F_HI_HZ: f64 = 5000.0;
pub const DEFAULT_PER_OCTAVE: usize = 6;
/// Fundamental periods covered by the aligned waveform.
pub const ALIGNED_PERIODS: usize = 4;
/// Points the aligned waveform is resampled to.
pub const ALIGNED_POINTS: usize = 128;

const WAVEFORM_QUANTUM: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct AnalyzerConfig {
    pub sample_rate_hz: f64,
    pub hop_samples: usize,
    pub f_lo_hz: f64,
    pub f_hi_hz: f64,
    pub per_octave: usize,
    pub stretch: f64,
    pub envelope: EnvelopeKind,
    pub window_frames: usize,
    pub salience_threshold_db: f64,
    pub phase_maps: bool,
    /// Table to use instead of the shipped one; must match the setup.
    pub snr_table: Option<CalibrationTable>,
}

impl Default for AnalyzerConfig {
    fn default() -> Self {
        Self {
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
            hop_samples: DEFAULT_HOP_SAMPLES,
            f_lo_hz: DEFAULT_F_LO_HZ,
            f_hi_hz: DEFAULT_F_HI_HZ,
            per_octave: DEFAULT_PER_OCTAVE,
            stretch: DEFAULT_STRETCH,
            envelope: EnvelopeKind::SixTerm,
            window_frames: snr::DEFAULT_WINDOW_FRAMES,
            salience_threshold_db: f0::DEFAULT_SALIENCE_THRESHOLD_DB,
            phase_maps: false,
            snr_table: None,
        }
    }
}

impl AnalyzerConfig {
    /// Hop in whole samples for a hop given in milliseconds (rounded down).
    pub fn hop_from_ms(hop_ms: f64, sample_rate_hz: f64) -> Result<usize> {
        let hop = (hop_ms * sample_rate_hz / 1000.0 + 1e-9).floor();
        if !(hop >= 1.0) {
            return Err(Error::InvalidParameter(format!("hop of {hop_ms} ms is below one sample")));
        }
        Ok(hop as usize)
    }

    pub fn table_key(&self) -> TableKey {
        TableKey {
            envelope: self.envelope,
            stretch: self.stretch,
            sample_rate_hz: self.sample_rate_hz,
            hop_samples: self.hop_samples,
            window_frames: self.window_frames,
            per_octave: self.per_octave,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hop_samples == 0 {
            return Err(Error::InvalidParameter("hop must be at least one sample".into()));
        }
        if self.window_frames < 2 {
            return Err(Error::InvalidParameter("SNR window needs at least two frames".into()));
        }
        if !self.salience_threshold_db.is_finite() {
            return Err(Error::InvalidParameter("salience threshold must be finite".into()));
        }
        Ok(())
    }

    /// The configured table, the shipped one if it fits, or a fresh
    /// calibration for this setup.
    pub fn resolve_snr_table<T: Real>(&self) -> Result<CalibrationTable> {
        let key = self.table_key();
        if let Some(table) = &self.snr_table {
            table.check_compatible(&key)?;
            return Ok(table.clone());
        }
        let shipped = CalibrationTable::shipped_six_term();
        if shipped.check_compatible(&key).is_ok() {
            return Ok(shipped);
        }
        let options = CalibrationOptions {
            hop_samples: self.hop_samples,
            window_frames: self.window_frames,
            per_octave: self.per_octave,
            ..CalibrationOptions::default()
        };
        Ok(snr::calibrate::<T>(self.envelope, self.stretch, self.sample_rate_hz, &options)?.table)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateReading {
    pub freq_hz: f64,
    pub snr_db: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestReading {
    pub freq_hz: f64,
    pub snr_db: f64,
    pub midi_float: f64,
    pub note_name: String,
    pub cents: f64,
}

/// Per-channel attribute vectors, lowest channel first. `None` marks
/// channels whose output was too small to define a phase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseMaps {
    pub center_hz: Vec<f64>,
    pub magnitude_db: Vec<f64>,
    pub phase: Vec<Option<f64>>,
    pub norm_inst_freq: Vec<Option<f64>>,
    pub norm_group_delay: Vec<Option<f64>>,
}

/// Everything published for one hop instant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisFrame {
    pub t_ms: f64,
    pub sample_index: u64,
    pub warmup: bool,
    /// At most four, by SNR descending.
    pub candidates: Vec<CandidateReading>,
    pub best: Option<BestReading>,
    pub salience_db: f64,
    /// Readings over the samples since the previous frame.
    pub level: LevelFrame<f64>,
    /// Power in dBFS on 1/24-octave bins from 50 Hz, rounded to 0.1 dB.
    pub spectrum: Vec<f64>,
    /// About four fundamental periods ending before `sample_index`, starting
    /// at zero phase of the fundamental; empty without a best candidate.
    pub aligned_waveform: Vec<f64>,
    /// Input samples spanned by `aligned_waveform`.
    pub aligned_span_samples: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub phase_maps: Option<PhaseMaps>,
}

/// Incremental analyzer. Feed blocks with [`push`](Self::push), then call
/// [`finish`](Self::finish) to flush the frames awaiting look-ahead.
#[derive(Debug)]
pub struct Analyzer<T: Real> {
    config: AnalyzerConfig,
    bank: ChannelBank<T>,
    table: CalibrationTable,
    tracker: SnrTracker<T>,
    meter: LevelMeter<f64>,
    spectrum: PowerSpectrum,
    lookahead: usize,
    keep_back: usize,
    // Samples [base, base + history.len()) of the stream.
    history: Vec<f64>,
    base: usize,
    next_frame: usize,
    // First sample not yet seen by the level meter.
    level_cursor: usize,
    segment: Vec<T>,
}

impl<T: Real> Analyzer<T> {
    pub fn new(config: AnalyzerConfig) -> Result<Self> {
        config.validate()?;
        let bank = ChannelBank::<T>::design_with(
            config.envelope,
            T::lit(config.f_lo_hz),
            T::lit(config.f_hi_hz),
            config.per_octave,
            T::lit(config.stretch),
            T::lit(config.sample_rate_hz),
        )?;
        let table = config.resolve_snr_table::<T>()?;
        let spectrum = PowerSpectrum::new(config.sample_rate_hz);
        let max_half = bank.max_half_len();
        let lookahead = (max_half + 1).max(spectrum.fft_len() / 2 - 1);
        let longest_period = config.sample_rate_hz / bank.center_hz(0).as_f64();
        let keep_back = (max_half)
            .max(spectrum.fft_len() / 2)
            .max(((ALIGNED_PERIODS + 1) as f64 * longest_period).ceil() as usize + 2)
            .max(config.hop_samples);
        Ok(Self {
            tracker: SnrTracker::new(bank.len(), config.window_frames),
            meter: LevelMeter::new(config.sample_rate_hz)?,
            segment: vec![T::zero(); 2 * max_half + 2],
            bank,
            table,
            spectrum,
            lookahead,
            keep_back,
            history: Vec::new(),
            base: 0,
            next_frame: 0,
            level_cursor: 0,
            config,
        })
    }

    pub fn config(&self) -> &AnalyzerConfig {
        &self.config
    }

    pub fn bank(&self) -> &ChannelBank<T> {
        &self.bank
    }

    pub fn snr_table(&self) -> &CalibrationTable {
        &self.table
    }

    /// Samples past a hop instant that must arrive before its frame is emitted.
    pub fn lookahead_samples(&self) -> usize {
        self.lookahead
    }

    /// Worst-case delay, in samples, between the newest input sample and the
    /// frame instant when input arrives in blocks of at most one hop.
    pub fn latency_bound_samples(&self) -> usize {
        self.lookahead + self.config.hop_samples - 1
    }

    pub fn samples_received(&self) -> usize {
        self.base + self.history.len()
    }

    pub fn set_level_calibration(&mut self, calibration: Option<CalibrationState>) {
        self.meter.set_calibration(calibration);
    }

    pub fn level_calibration(&self) -> Option<&CalibrationState> {
        self.meter.calibration()
    }

    pub fn set_phase_maps(&mut self, enabled: bool) {
        self.config.phase_maps = enabled;
    }

    /// Starts a new stream; keeps configuration and level calibration.
    pub fn reset(&mut self) {
        self.tracker.reset();
        self.meter.reset();
        self.history.clear();
        self.base = 0;
        self.next_frame = 0;
        self.level_cursor = 0;
    }

    pub fn push(&mut self, block: &[f64]) -> Vec<AnalysisFrame> {
        self.history.extend_from_slice(block);
        let mut frames = Vec::new();
        while self.next_frame + self.lookahead < self.samples_received() {
            frames.push(self.emit());
        }
        self.trim();
        frames
    }

    /// Emits the remaining frames for instants inside the stream.
    pub fn finish(&mut self) -> Vec<AnalysisFrame> {
        let mut frames = Vec::new();
        while self.next_frame < self.samples_received() {
            frames.push(self.emit());
        }
        frames
    }

    fn sample(&self, index: i64) -> f64 {
        if index < self.base as i64 {
            return 0.0;
        }
        self.history.get(index as usize - self.base).copied().unwrap_or(0.0)
    }

    fn trim(&mut self) {
        let keep_from = self.next_frame.saturating_sub(self.keep_back).min(self.level_cursor);
        let excess = keep_from.saturating_sub(self.base);
        if excess > 1 << 16 {
            self.history.drain(..excess);
            self.base += excess;
        }
    }

    fn emit(&mut self) -> AnalysisFrame {
        let n = self.next_frame;
        self.next_frame += self.config.hop_samples;

        let max_half = self.bank.max_half_len() as i64;
        let start = n as i64 - max_half;
        let mut segment = std::mem::take(&mut self.segment);
        for (j, slot) in segment.iter_mut().enumerate() {
            *slot = T::lit(self.sample(start + j as i64));
        }
        let pairs = self.bank.evaluate(&segment, n);
        self.segment = segment;
        let mut attributes = assemble_attribute_frame(&self.bank, &pairs);
        self.tracker.update(&mut attributes, &self.table);

        let candidates = f0::select_candidates(f0::find_fixed_points(&attributes, &self.bank), MAX_CANDIDATES);
        let best = f0::best_candidate(&candidates, T::lit(self.config.salience_threshold_db));
        let salience_db = f0::salience(&candidates).as_f64();

        let level_end = (n + 1).min(self.samples_received());
        let block: Vec<f64> = (self.level_cursor..level_end).map(|i| self.sample(i as i64)).collect();
        self.level_cursor = self.level_cursor.max(level_end);
        let level = self.meter.process(&block);

        let half_fft = (self.spectrum.fft_len() / 2) as i64;
        let window: Vec<f64> = (0..self.spectrum.fft_len() as i64)
            .map(|j| self.sample(n as i64 - half_fft + j))
            .collect();
        let spectrum = self.spectrum.compute(&window);

        let (aligned_waveform, aligned_span_samples) = match &best {
            Some((candidate, _)) => self.aligned_snippet(n, candidate, &attributes),
            None => (Vec::new(), 0.0),
        };

        let phase_maps = self.config.phase_maps.then(|| phase_maps(&self.bank, &attributes));

        AnalysisFrame {
            t_ms: n as f64 * 1000.0 / self.config.sample_rate_hz,
            sample_index: n as u64,
            warmup: attributes.warmup,
            candidates: candidates
                .iter()
                .map(|c| CandidateReading {
                    freq_hz: c.freq_hz.as_f64(),
                    snr_db: c.snr_db.as_f64(),
                })
                .collect(),
            best: best.map(|(c, note)| BestReading {
                freq_hz: c.freq_hz.as_f64(),
                snr_db: c.snr_db.as_f64(),
                midi_float: note.midi_float.as_f64(),
                note_name: note.note_name,
                cents: note.cents_offset.as_f64(),
            }),
            salience_db,
            level,
            spectrum,
            aligned_waveform,
            aligned_span_samples,
            phase_maps,
        }
    }

    /// Resamples `ALIGNED_PERIODS` periods of the input so that the
    /// fundamental's phase, read from the channel nearest the candidate, is
    /// zero at the first point.
    fn aligned_snippet(
        &self,
        n: usize,
        candidate: &F0Candidate<T>,
        attributes: &AttributeFrame<T>,
    ) -> (Vec<f64>, f64) {
        let channel = self.bank.nearest_channel(candidate.freq_hz);
        let Some(phase) = attributes.channels[channel].phase else {
            return (Vec::new(), 0.0);
        };
        let period = self.config.sample_rate_hz / candidate.freq_hz.as_f64();
        let cycles_since_zero = (phase.as_f64() / std::f64::consts::TAU).rem_euclid(1.0);
        let span = ALIGNED_PERIODS as f64 * period;
        let start = n as f64 - (cycles_since_zero + ALIGNED_PERIODS as f64) * period;
        let step = span / ALIGNED_POINTS as f64;
        let points = (0..ALIGNED_POINTS)
            .map(|i| {
                let t = start + i as f64 * step;
                let i0 = t.floor();
                let frac = t - i0;
                let a = self.sample(i0 as i64);
                let b = self.sample(i0 as i64 + 1);
                ((a + frac * (b - a)) / WAVEFORM_QUANTUM).round() * WAVEFORM_QUANTUM
            })
            .collect();
        (points, span)
    }
}

fn phase_maps<T: Real>(bank: &ChannelBank<T>, attributes: &AttributeFrame<T>) -> PhaseMaps {
    let channels = &attributes.channels;
    let as_f64 = |v: Option<T>| v.map(|x| x.as_f64());
    PhaseMaps {
        center_hz: bank.centers().map(|c| c.as_f64()).collect(),
        magnitude_db: channels
            .iter()
            .map(|a| crate::level::power_to_db(a.magnitude.as_f64().powi(2)))
            .collect(),
        phase: channels.iter().map(|a| as_f64(a.phase)).collect(),
        norm_inst_freq: channels.iter().map(|a| as_f64(a.norm_inst_freq)).collect(),
        norm_group_delay: channels.iter().map(|a| as_f64(a.norm_group_delay)).collect(),
    }
}

/// Runs a whole signal through a fresh analyzer.
pub fn analyze_signal<T: Real>(config: AnalyzerConfig, samples: &[f64]) -> Result<Vec<AnalysisFrame>> {
    let mut analyzer = Analyzer::<T>::new(config)?;
    let mut frames = analyzer.push(samples);
    frames.extend(analyzer.finish());
    Ok(frames)
}
