//! Per-channel SNR from temporal variations of normalized instantaneous
//! frequency and normalized group delay.
//!
//! For a stable sinusoid dominating a channel both attributes are constant
//! across hops. The raw measure is the RMS of their first differences over a
//! short window; a calibration table maps it to dB. Tables are produced by
//! running a unit sinusoid in white noise at known SNRs through the same
//! filters, hop size and window used at analysis time. The SNR of a mixture
//! is stated either over the full band or at the output of the on-center
//! channel; see [`NoiseReference`].

use std::collections::VecDeque;
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex;

use crate::envelope::{AnalyticImpulseResponse, EnvelopeKind};
use crate::error::{Error, Result};
use crate::filterbank::{process_hop, ChannelBank};
use crate::phase::{assemble_attribute_frame, AttributeFrame};
use crate::scalar::Real;
use crate::synth;

/// Smoothing span in hops (20 ms at the default 5 ms hop).
pub const DEFAULT_WINDOW_FRAMES: usize = 4;
/// Upper end of the validated SNR range.
pub const SNR_CEILING_DB: f64 = 80.0;
pub const CALIBRATION_TONE_HZ: f64 = 120.0;
pub const DEFAULT_CALIBRATION_SEED: u64 = 0x5eed_2019;

/// Rises in the measured curve up to this relative amount are treated as
/// saturation and pooled; larger rises fail the calibration.
pub const SATURATION_TOLERANCE: f64 = 0.05;

const TABLE_HEADER: &str = "# phasevox snr calibration";
const TABLE_VERSION: u32 = 1;
const SHIPPED_SIX_TERM: &str = include_str!("../data/six_term_44100.cal");

/// RMS mixed deviation of one channel's normalized attributes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VariationMeasure<T> {
    pub channel_index: usize,
    pub value: T,
    pub window_frames: usize,
}

/// `sqrt(mean((d nu)^2 + (d tau)^2) / 2)` over the first differences within
/// the last `window_frames` entries of both series.
pub fn mix_variation<T: Real>(norm_if: &[T], norm_gd: &[T], window_frames: usize) -> Result<T> {
    if window_frames < 2 {
        return Err(Error::InsufficientFrames {
            needed: 2,
            got: window_frames,
        });
    }
    let available = norm_if.len().min(norm_gd.len());
    if available < window_frames {
        return Err(Error::InsufficientFrames {
            needed: window_frames,
            got: available,
        });
    }
    let nu = &norm_if[norm_if.len() - window_frames..];
    let tau = &norm_gd[norm_gd.len() - window_frames..];
    Ok(variation_of(nu.iter().copied().zip(tau.iter().copied())))
}

fn variation_of<T: Real>(points: impl Iterator<Item = (T, T)>) -> T {
    let mut previous: Option<(T, T)> = None;
    let mut sum = T::zero();
    let mut count = 0usize;
    for (nu, tau) in points {
        if let Some((p_nu, p_tau)) = previous {
            let d_nu = nu - p_nu;
            let d_tau = tau - p_tau;
            sum = sum + d_nu * d_nu + d_tau * d_tau;
            count += 1;
        }
        previous = Some((nu, tau));
    }
    (sum / (T::lit(2.0) * T::from_usize_lossy(count))).sqrt()
}
/// Bandwidth over which the noise power of a calibration mixture is taken.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum NoiseReference {
    /// Sample-level sinusoid-to-noise power ratio.
    FullBand,
    /// Ratio at the output of the channel centered on the tone.
    #[default]
    ChannelBand,
}

impl fmt::Display for NoiseReference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::FullBand => "full-band",
            Self::ChannelBand => "channel-band",
        })
    }
}

impl FromStr for NoiseReference {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full-band" => Ok(Self::FullBand),
            "channel-band" => Ok(Self::ChannelBand),
            other => Err(Error::InvalidParameter(format!("unknown noise reference `{other}`"))),
        }
    }
}

/// Output SNR minus full-band SNR for a real sinusoid at the channel center
/// in white noise: `|H(fc)|^2 / (2 sum |h|^2)` in dB.
pub fn channel_band_gain_db<T: Real>(response: &AnalyticImpulseResponse<T>) -> f64 {
    let fs = response.sample_rate_hz().as_f64();
    let fc = response.center_hz().as_f64();
    let half = response.half_len() as f64;
    let mut at_center = Complex::new(0.0, 0.0);
    let mut energy = 0.0;
    for (i, h) in response.samples().iter().enumerate() {
        let h = Complex::new(h.re.as_f64(), h.im.as_f64());
        let t = (i as f64 - half) / fs;
        at_center += h * Complex::from_polar(1.0, -std::f64::consts::TAU * fc * t);
        energy += h.norm_sqr();
    }
    10.0 * (at_center.norm_sqr() / (2.0 * energy)).log10()
}

/// Identifies the analysis setup a calibration table is valid for.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TableKey {
    pub envelope: EnvelopeKind,
    pub stretch: f64,
    pub sample_rate_hz: f64,
    pub hop_samples: usize,
    pub window_frames: usize,
    pub per_octave: usize,
}

impl TableKey {
    pub fn six_term_default() -> Self {
        Self {
            envelope: EnvelopeKind::SixTerm,
            stretch: crate::envelope::DEFAULT_STRETCH,
            sample_rate_hz: 44100.0,
            hop_samples: 220,
            window_frames: DEFAULT_WINDOW_FRAMES,
            per_octave: 6,
        }
    }
}

/// One point of the variation-to-SNR mapping.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Knot {
    pub variation: f64,
    pub snr_db: f64,
}

/// Monotone mapping from variation to SNR in dB.
#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationTable {
    pub key: TableKey,
    pub tone_hz: f64,
    /// How the dB axis of the table was defined.
    pub noise_reference: NoiseReference,
    pub seed: u64,
    pub duration_s: f64,
    pub created: String,
    // Sorted by increasing variation (decreasing SNR).
    knots: Vec<Knot>,
}

impl CalibrationTable {
    pub fn new(key: TableKey, mut knots: Vec<Knot>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::InvalidParameter(
                "a calibration table needs at least two knots".into(),
            ));
        }
        knots.sort_by(|a, b| a.variation.total_cmp(&b.variation));
        let strictly_monotone = knots
            .windows(2)
            .all(|w| w[1].variation > w[0].variation && w[1].snr_db < w[0].snr_db);
        if !strictly_monotone || knots.iter().any(|k| !(k.variation > 0.0) || !k.snr_db.is_finite()) {
            return Err(Error::NonMonotone(
                knots.iter().map(|k| (k.snr_db, k.variation)).collect(),
            ));
        }
        Ok(Self {
            key,
            tone_hz: CALIBRATION_TONE_HZ,
            noise_reference: NoiseReference::default(),
            seed: 0,
            duration_s: 0.0,
            created: String::new(),
            knots,
        })
    }

    /// Table shipped for the six-term envelope at 44.1 kHz with default settings.
    pub fn shipped_six_term() -> Self {
        Self::from_text(SHIPPED_SIX_TERM).expect("shipped calibration table parses")
    }

    pub fn knots(&self) -> &[Knot] {
        &self.knots
    }

    pub fn min_snr_db(&self) -> f64 {
        self.knots.last().map(|k| k.snr_db).unwrap_or(0.0)
    }

    pub fn max_snr_db(&self) -> f64 {
        self.knots.first().map(|k| k.snr_db).unwrap_or(SNR_CEILING_DB)
    }

    /// Rejects use with a different analysis setup.
    pub fn check_compatible(&self, key: &TableKey) -> Result<()> {
        let mine = &self.key;
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0);
        let mut problems = Vec::new();
        if mine.envelope != key.envelope {
            problems.push(format!("envelope {} != {}", mine.envelope, key.envelope));
        }
        if !close(mine.stretch, key.stretch) {
            problems.push(format!("stretch {} != {}", mine.stretch, key.stretch));
        }
        if !close(mine.sample_rate_hz, key.sample_rate_hz) {
            problems.push(format!("sample rate {} != {}", mine.sample_rate_hz, key.sample_rate_hz));
        }
        if mine.hop_samples != key.hop_samples {
            problems.push(format!("hop {} != {}", mine.hop_samples, key.hop_samples));
        }
        if mine.window_frames != key.window_frames {
            problems.push(format!("window {} != {}", mine.window_frames, key.window_frames));
        }
        if mine.per_octave != key.per_octave {
            problems.push(format!("per-octave {} != {}", mine.per_octave, key.per_octave));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::TableMismatch(problems.join("; ")))
        }
    }

    /// Interpolates linearly in `ln(variation)` between knots and clamps to
    /// the table range; variations below the first knot read as its SNR.
    pub fn estimate(&self, variation: f64) -> f64 {
        let first = self.knots[0];
        let last = *self.knots.last().unwrap();
        let estimate = if !(variation > first.variation) {
            first.snr_db
        } else if variation >= last.variation {
            last.snr_db
        } else {
            let upper = self.knots.partition_point(|k| k.variation < variation);
            let hi = self.knots[upper];
            if hi.variation == variation {
                hi.snr_db
            } else {
                let lo = self.knots[upper - 1];
                let x = (variation.ln() - lo.variation.ln()) / (hi.variation.ln() - lo.variation.ln());
                lo.snr_db + x * (hi.snr_db - lo.snr_db)
            }
        };
        estimate.clamp(self.min_snr_db(), SNR_CEILING_DB.max(self.min_snr_db()))
    }

    pub fn to_text(&self) -> String {
        let k = &self.key;
        let mut out = String::new();
        let _ = writeln!(out, "{TABLE_HEADER}");
        let _ = writeln!(out, "version = {TABLE_VERSION}");
        let _ = writeln!(out, "envelope = {}", k.envelope);
        let _ = writeln!(out, "stretch = {}", k.stretch);
        let _ = writeln!(out, "sample_rate_hz = {}", k.sample_rate_hz);
        let _ = writeln!(out, "hop_samples = {}", k.hop_samples);
        let _ = writeln!(out, "window_frames = {}", k.window_frames);
        let _ = writeln!(out, "per_octave = {}", k.per_octave);
        let _ = writeln!(out, "tone_hz = {}", self.tone_hz);
        let _ = writeln!(out, "snr_definition = {}", self.noise_reference);
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "duration_s = {}", self.duration_s);
        let _ = writeln!(out, "created = {}", self.created);
        let _ = writeln!(out, "knots = {}", self.knots.len());
        let _ = writeln!(out, "variation,snr_db");
        for knot in &self.knots {
            let _ = writeln!(out, "{:e},{}", knot.variation, knot.snr_db);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::TableParse { line, message };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        match lines.next() {
            Some((_, header)) if header == TABLE_HEADER => {}
            _ => return Err(parse_err(1, format!("expected `{TABLE_HEADER}`"))),
        }

        let mut fields = std::collections::HashMap::new();
        let mut knot_count = None;
        for (line, content) in lines.by_ref() {
            if content.is_empty() || content.starts_with('#') {
                continue;
            }
            if content == "variation,snr_db" {
                break;
            }
            let (name, value) = content
                .split_once('=')
                .ok_or_else(|| parse_err(line, format!("expected `key = value`, got `{content}`")))?;
            let (name, value) = (name.trim(), value.trim());
            if name == "knots" {
                knot_count = Some(
                    value
                        .parse::<usize>()
                        .map_err(|e| parse_err(line, format!("knots: {e}")))?,
                );
            }
            fields.insert(name.to_string(), (line, value.to_string()));
        }

        let get = |name: &str| -> Result<(usize, String)> {
            fields
                .get(name)
                .cloned()
                .ok_or_else(|| parse_err(0, format!("missing field `{name}`")))
        };
        fn num<F: std::str::FromStr>(name: &str, (line, value): (usize, String)) -> Result<F>
        where
            F::Err: std::fmt::Display,
        {
            value.parse::<F>().map_err(|e| Error::TableParse {
                line,
                message: format!("{name}: {e}"),
            })
        }

        let version: u32 = num("version", get("version")?)?;
        if version != TABLE_VERSION {
            return Err(parse_err(0, format!("unsupported table version {version}")));
        }
        let (env_line, env) = get("envelope")?;
        let envelope = env
            .parse::<EnvelopeKind>()
            .map_err(|e| parse_err(env_line, e.to_string()))?;
        let key = TableKey {
            envelope,
            stretch: num("stretch", get("stretch")?)?,
            sample_rate_hz: num("sample_rate_hz", get("sample_rate_hz")?)?,
            hop_samples: num("hop_samples", get("hop_samples")?)?,
            window_frames: num("window_frames", get("window_frames")?)?,
            per_octave: num("per_octave", get("per_octave")?)?,
        };

        let mut knots = Vec::new();
        for (line, content) in lines {
            if content.is_empty() || content.starts_with('#') {
                continue;
            }
            let (v, s) = content
                .split_once(',')
                .ok_or_else(|| parse_err(line, format!("expected `variation,snr_db`, got `{content}`")))?;
            let variation = v
                .trim()
                .parse::<f64>()
                .map_err(|e| parse_err(line, format!("variation: {e}")))?;
            let snr_db = s
                .trim()
                .parse::<f64>()
                .map_err(|e| parse_err(line, format!("snr_db: {e}")))?;
            knots.push(Knot { variation, snr_db });
        }
        if let Some(expected) = knot_count {
            if expected != knots.len() {
                return Err(parse_err(
                    0,
                    format!("header announces {expected} knots, found {}", knots.len()),
                ));
            }
        }

        let mut table = Self::new(key, knots)?;
        if let Ok(tone) = get("tone_hz") {
            table.tone_hz = num("tone_hz", tone)?;
        }
        if let Ok((line, definition)) = get("snr_definition") {
            table.noise_reference = definition
                .parse()
                .map_err(|e: Error| parse_err(line, e.to_string()))?;
        }
        if let Ok(seed) = get("seed") {
            table.seed = num("seed", seed)?;
        }
        if let Ok(duration) = get("duration_s") {
            table.duration_s = num("duration_s", duration)?;
        }
        if let Ok((_, created)) = get("created") {
            table.created = created;
        }
        Ok(table)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Looks up SNR for a measured variation.
pub fn estimate_snr<T: Real>(variation: &VariationMeasure<T>, table: &CalibrationTable) -> T {
    T::lit(table.estimate(variation.value.as_f64()))
}

/// Rolling per-channel attribute history that fills `snr_db` in frames.
#[derive(Clone, Debug)]
pub struct SnrTracker<T> {
    window_frames: usize,
    history: Vec<VecDeque<Option<(T, T)>>>,
}

impl<T: Real> SnrTracker<T> {
    pub fn new(channels: usize, window_frames: usize) -> Self {
        Self {
            window_frames: window_frames.max(2),
            history: vec![VecDeque::with_capacity(window_frames + 1); channels],
        }
    }

    pub fn window_frames(&self) -> usize {
        self.window_frames
    }

    pub fn reset(&mut self) {
        self.history.iter_mut().for_each(VecDeque::clear);
    }

    /// Appends the frame's normalized attributes and returns per-channel
    /// variations; `None` until the window is full of valid values.
    pub fn push(&mut self, frame: &AttributeFrame<T>) -> Vec<Option<VariationMeasure<T>>> {
        assert_eq!(frame.channels.len(), self.history.len(), "channel count changed");
        let window = self.window_frames;
        frame
            .channels
            .iter()
            .zip(self.history.iter_mut())
            .enumerate()
            .map(|(index, (attrs, history))| {
                let point = attrs.norm_inst_freq.zip(attrs.norm_group_delay);
                if history.len() == window {
                    history.pop_front();
                }
                history.push_back(point);
                if history.len() < window || history.iter().any(Option::is_none) {
                    return None;
                }
                Some(VariationMeasure {
                    channel_index: index,
                    value: variation_of(history.iter().map(|p| p.unwrap())),
                    window_frames: window,
                })
            })
            .collect()
    }

    /// Pushes the frame and writes calibrated SNR into each channel.
    pub fn update(&mut self, frame: &mut AttributeFrame<T>, table: &CalibrationTable) {
        let variations = self.push(frame);
        for (attrs, variation) in frame.channels.iter_mut().zip(variations) {
            attrs.snr_db = variation.map(|v| estimate_snr(&v, table));
        }
    }
}

/// Settings for [`calibrate`] and [`measure_variation`].
#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationOptions {
    pub tone_hz: f64,
    pub duration_s: f64,
    pub hop_samples: usize,
    pub window_frames: usize,
    pub per_octave: usize,
    pub seed: u64,
    pub noise_reference: NoiseReference,
    /// Ascending SNR grid in dB.
    pub snr_grid: Vec<f64>,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            tone_hz: CALIBRATION_TONE_HZ,
            duration_s: 4.0,
            hop_samples: 220,
            window_frames: DEFAULT_WINDOW_FRAMES,
            per_octave: 6,
            seed: DEFAULT_CALIBRATION_SEED,
            noise_reference: NoiseReference::default(),
            snr_grid: default_snr_grid(),
        }
    }
}

/// 0 to 80 dB in 5 dB steps.
pub fn default_snr_grid() -> Vec<f64> {
    (0..=16).map(|i| 5.0 * i as f64).collect()
}

impl CalibrationOptions {
    pub fn validate(&self) -> Result<()> {
        let grid = &self.snr_grid;
        if grid.len() < 2 || grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter(
                "SNR grid must be strictly ascending with at least two points".into(),
            ));
        }
        if grid[0] > 10.0 || *grid.last().unwrap() < SNR_CEILING_DB {
            return Err(Error::InvalidParameter(format!(
                "SNR grid must cover 10..{SNR_CEILING_DB} dB"
            )));
        }
        if grid.windows(2).any(|w| w[1] - w[0] > 5.0 + 1e-9) {
            return Err(Error::InvalidParameter("SNR grid steps must not exceed 5 dB".into()));
        }
        if self.duration_s < 1.0 {
            return Err(Error::InvalidParameter("calibration runs need at least 1 s".into()));
        }
        if self.hop_samples == 0 || self.window_frames < 2 || self.per_octave == 0 {
            return Err(Error::InvalidParameter(
                "hop >= 1, window >= 2 and per_octave >= 1 required".into(),
            ));
        }
        if !(self.tone_hz > 0.0) {
            return Err(Error::InvalidParameter("tone frequency must be positive".into()));
        }
        Ok(())
    }

    fn key(&self, envelope: EnvelopeKind, stretch: f64, sample_rate_hz: f64) -> TableKey {
        TableKey {
            envelope,
            stretch,
            sample_rate_hz,
            hop_samples: self.hop_samples,
            window_frames: self.window_frames,
            per_octave: self.per_octave,
        }
    }

    /// Seed used for grid point `index`.
    pub fn seed_for(&self, index: usize) -> u64 {
        self.seed.wrapping_add(index as u64)
    }
}

/// One measured point of a calibration run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeasuredPoint {
    pub snr_db: f64,
    pub variation: f64,
    /// Pooled into the preceding knot because the curve had flattened out.
    pub saturated: bool,
}

#[derive(Clone, Debug)]
pub struct Calibration {
    pub table: CalibrationTable,
    pub measured: Vec<MeasuredPoint>,
}

/// Median per-hop variation for a unit sinusoid at `options.tone_hz` in white
/// noise at `snr_db`, observed on a channel centered on the tone (its upper
/// neighbour supplies the group delay).
pub fn measure_variation<T: Real>(
    envelope: EnvelopeKind,
    stretch: f64,
    sample_rate_hz: f64,
    snr_db: f64,
    seed: u64,
    options: &CalibrationOptions,
) -> Result<f64> {
    let bank = calibration_bank::<T>(envelope, stretch, sample_rate_hz, options)?;
    let full_band_db = match options.noise_reference {
        NoiseReference::FullBand => snr_db,
        NoiseReference::ChannelBand => snr_db - channel_band_gain_db(bank.channels()[0].response()),
    };
    let len = (options.duration_s * sample_rate_hz).round() as usize;
    let signal = synth::tone_in_noise::<T>(options.tone_hz, full_band_db, seed, sample_rate_hz, len);
    variation_on(&bank, &signal, options)
}

/// Median per-hop variation of `signal` on the calibration channel pair.
pub fn measure_signal_variation<T: Real>(
    envelope: EnvelopeKind,
    stretch: f64,
    sample_rate_hz: f64,
    signal: &[T],
    options: &CalibrationOptions,
) -> Result<f64> {
    let bank = calibration_bank::<T>(envelope, stretch, sample_rate_hz, options)?;
    variation_on(&bank, signal, options)
}

/// The on-center channel and its upper neighbour.
fn calibration_bank<T: Real>(
    envelope: EnvelopeKind,
    stretch: f64,
    sample_rate_hz: f64,
    options: &CalibrationOptions,
) -> Result<ChannelBank<T>> {
    let upper = options.tone_hz * (1.0 / options.per_octave as f64).exp2();
    ChannelBank::<T>::from_centers(
        envelope,
        &[T::lit(options.tone_hz), T::lit(upper)],
        options.per_octave,
        T::lit(stretch),
        T::lit(sample_rate_hz),
    )
}

fn variation_on<T: Real>(bank: &ChannelBank<T>, signal: &[T], options: &CalibrationOptions) -> Result<f64> {
    let max_half = bank.max_half_len();
    let settle = bank.channels().iter().map(|c| c.response().len()).max().unwrap_or(0);
    let mut tracker = SnrTracker::<T>::new(bank.len(), options.window_frames);
    let mut values = Vec::new();
    for hop in process_hop(bank, signal, options.hop_samples)? {
        if hop.sample_index + max_half + 1 >= signal.len() {
            break;
        }
        let frame = assemble_attribute_frame(bank, &hop.pairs);
        let variations = tracker.push(&frame);
        if hop.sample_index < settle {
            continue;
        }
        if let Some(v) = variations[0] {
            values.push(v.value.as_f64());
        }
    }
    if values.is_empty() {
        return Err(Error::InsufficientFrames {
            needed: options.window_frames,
            got: 0,
        });
    }
    Ok(median(&mut values))
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len().is_multiple_of(2) {
        0.5 * (values[mid - 1] + values[mid])
    } else {
        values[mid]
    }
}

/// Runs the synthetic calibration over `options.snr_grid` and fits the table.
pub fn calibrate<T: Real>(
    envelope: EnvelopeKind,
    stretch: f64,
    sample_rate_hz: f64,
    options: &CalibrationOptions,
) -> Result<Calibration> {
    options.validate()?;
    if !(options.tone_hz * (1.0 / options.per_octave as f64).exp2() < sample_rate_hz / 2.0) {
        return Err(Error::CarrierOutOfRange {
            carrier_hz: options.tone_hz,
            nyquist_hz: sample_rate_hz / 2.0,
        });
    }
    let points = options
        .snr_grid
        .iter()
        .enumerate()
        .map(|(i, &snr)| {
            measure_variation::<T>(envelope, stretch, sample_rate_hz, snr, options.seed_for(i), options)
                .map(|variation| (snr, variation))
        })
        .collect::<Result<Vec<_>>>()?;
    let (measured, knots) = fit_monotone(&points)?;
    let mut table = CalibrationTable::new(options.key(envelope, stretch, sample_rate_hz), knots)?;
    table.tone_hz = options.tone_hz;
    table.seed = options.seed;
    table.noise_reference = options.noise_reference;
    table.duration_s = options.duration_s;
    table.created = chrono::Utc::now().format("%Y-%m-%dT%H:%M:%SZ").to_string();
    Ok(Calibration { table, measured })
}

/// Keeps points whose variation strictly drops as SNR rises. Points that fail
/// to drop but rise by no more than [`SATURATION_TOLERANCE`] are pooled into
/// the preceding knot; larger rises are reported as non-monotone.
pub fn fit_monotone(points: &[(f64, f64)]) -> Result<(Vec<MeasuredPoint>, Vec<Knot>)> {
    let mut measured = Vec::with_capacity(points.len());
    let mut knots: Vec<Knot> = Vec::with_capacity(points.len());
    let mut offending = Vec::new();
    for &(snr_db, variation) in points {
        if !(variation.is_finite() && variation > 0.0) {
            offending.push((snr_db, variation));
            continue;
        }
        let saturated = match knots.last() {
            None => false,
            Some(last) if variation < last.variation => false,
            Some(last) if variation <= last.variation * (1.0 + SATURATION_TOLERANCE) => true,
            Some(last) => {
                offending.push((last.snr_db, last.variation));
                offending.push((snr_db, variation));
                true
            }
        };
        if !saturated {
            knots.push(Knot { variation, snr_db });
        }
        measured.push(MeasuredPoint {
            snr_db,
            variation,
            saturated,
        });
    }
    if !offending.is_empty() || knots.len() < 2 {
        if offending.is_empty() {
            offending = points.to_vec();
        }
        return Err(Error::NonMonotone(offending));
    }
    Ok((measured, knots))
}
