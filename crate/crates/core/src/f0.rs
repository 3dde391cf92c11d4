//! f0 candidates as stable fixed points of the map from channel center
//! frequency to output instantaneous frequency.

use std::cmp::Ordering;

use crate::filterbank::ChannelBank;
use crate::phase::AttributeFrame;
use crate::scalar::Real;

/// Candidate count shown to the user.
pub const MAX_CANDIDATES: usize = 4;
/// Salience reported when no candidate exists.
pub const SALIENCE_FLOOR_DB: f64 = -10.0;
pub const DEFAULT_SALIENCE_THRESHOLD_DB: f64 = 15.0;

const NOTE_NAMES: [&str; 12] = ["C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B"];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct F0Candidate<T> {
    pub freq_hz: T,
    pub snr_db: T,
    /// Channel just below the crossing.
    pub lower_channel_index: usize,
    /// Position of the crossing between the two channels, in `[0, 1)`.
    pub interpolation_fraction: T,
}

/// Musical reading of a frequency on the 12-TET scale with A4 = 440 Hz.
#[derive(Clone, Debug, PartialEq)]
pub struct NoteReading<T> {
    pub midi_float: T,
    pub midi_nearest: i32,
    pub note_name: String,
    /// In `[-50, 50)`.
    pub cents_offset: T,
}

pub fn freq_to_midi<T: Real>(freq_hz: T) -> T {
    T::lit(69.0) + T::lit(12.0) * (freq_hz / T::lit(440.0)).log2()
}

pub fn midi_to_freq<T: Real>(midi: T) -> T {
    T::lit(440.0) * ((midi - T::lit(69.0)) / T::lit(12.0)).exp2()
}

/// Scientific pitch name such as `A4` or `C#3`.
pub fn note_name(midi: i32) -> String {
    let pitch_class = midi.rem_euclid(12) as usize;
    let octave = midi.div_euclid(12) - 1;
    format!("{}{}", NOTE_NAMES[pitch_class], octave)
}

impl<T: Real> NoteReading<T> {
    pub fn from_freq(freq_hz: T) -> Self {
        let midi_float = freq_to_midi(freq_hz);
        let nearest = (midi_float + T::lit(0.5)).floor();
        let midi_nearest = nearest.to_i32().unwrap_or(0);
        Self {
            midi_float,
            midi_nearest,
            note_name: note_name(midi_nearest),
            cents_offset: T::lit(100.0) * (midi_float - nearest),
        }
    }
}

/// Downward zero crossings of `d[m] = IF[m] - center[m]` between adjacent
/// channels, located by linear interpolation of `d` on a log2-frequency axis.
///
/// Channels without a valid instantaneous frequency or SNR break crossings.
pub fn find_fixed_points<T: Real>(frame: &AttributeFrame<T>, bank: &ChannelBank<T>) -> Vec<F0Candidate<T>> {
    let usable = |m: usize| {
        let a = &frame.channels[m];
        a.inst_freq_hz.zip(a.snr_db).map(|(f, snr)| (f - bank.center_hz(m), snr))
    };
    let mut out = Vec::new();
    for m in 0..frame.channels.len().saturating_sub(1) {
        let (Some((d_lo, snr_lo)), Some((d_hi, snr_hi))) = (usable(m), usable(m + 1)) else {
            continue;
        };
        if !(d_lo >= T::zero() && d_hi < T::zero()) {
            continue;
        }
        let fraction = d_lo / (d_lo - d_hi);
        let lo = bank.center_hz(m).log2();
        let hi = bank.center_hz(m + 1).log2();
        out.push(F0Candidate {
            freq_hz: (lo + fraction * (hi - lo)).exp2(),
            snr_db: snr_lo + fraction * (snr_hi - snr_lo),
            lower_channel_index: m,
            interpolation_fraction: fraction,
        });
    }
    out
}

/// Orders by SNR (descending, lower frequency first on ties) and keeps
/// at most `max_count`.
pub fn select_candidates<T: Real>(mut candidates: Vec<F0Candidate<T>>, max_count: usize) -> Vec<F0Candidate<T>> {
    candidates.sort_by(|a, b| {
        b.snr_db
            .partial_cmp(&a.snr_db)
            .unwrap_or(Ordering::Equal)
            .then(a.freq_hz.partial_cmp(&b.freq_hz).unwrap_or(Ordering::Equal))
    });
    candidates.truncate(max_count);
    candidates
}

/// Top candidate and its note, if its SNR reaches `threshold_db`.
pub fn best_candidate<T: Real>(
    selected: &[F0Candidate<T>],
    threshold_db: T,
) -> Option<(F0Candidate<T>, NoteReading<T>)> {
    selected
        .first()
        .filter(|c| c.snr_db >= threshold_db)
        .map(|c| (*c, NoteReading::from_freq(c.freq_hz)))
}

/// SNR of the top candidate, or [`SALIENCE_FLOOR_DB`].
pub fn salience<T: Real>(selected: &[F0Candidate<T>]) -> T {
    selected
        .first()
        .map(|c| c.snr_db)
        .unwrap_or_else(|| T::lit(SALIENCE_FLOOR_DB))
}
