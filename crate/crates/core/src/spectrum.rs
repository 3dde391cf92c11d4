//! Short-window power spectrum resampled onto 1/24-octave bins.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

pub const SPECTRUM_F_LO_HZ: f64 = 50.0;
pub const SPECTRUM_F_HI_HZ: f64 = 8000.0;
pub const SPECTRUM_BINS_PER_OCTAVE: usize = 24;
pub const SPECTRUM_FFT_LEN: usize = 2048;
pub const SPECTRUM_FLOOR_DB: f64 = -140.0;

const HANN_ENBW_BINS: f64 = 1.5;

/// Hann-windowed band power in dBFS (a full-scale sinusoid reads 0 dB).
pub struct PowerSpectrum {
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    centers_hz: Vec<f64>,
    bands: Vec<Band>,
    norm: f64,
    buffer: Vec<Complex<f64>>,
}

enum Band {
    Sum(usize, usize),
    // No FFT bin falls inside: interpolate between bin `lo` and `lo + 1`.
    Interpolate(usize, f64),
}

impl std::fmt::Debug for PowerSpectrum {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PowerSpectrum")
            .field("fft_len", &self.window.len())
            .field("bins", &self.centers_hz.len())
            .finish()
    }
}

impl PowerSpectrum {
    pub fn new(sample_rate_hz: f64) -> Self {
        let len = SPECTRUM_FFT_LEN;
        let window: Vec<f64> = (0..len)
            .map(|n| 0.5 - 0.5 * (std::f64::consts::TAU * n as f64 / len as f64).cos())
            .collect();
        let coherent = window.iter().sum::<f64>() / 2.0;
        let bin_hz = sample_rate_hz / len as f64;
        let octaves = (SPECTRUM_F_HI_HZ / SPECTRUM_F_LO_HZ).log2();
        let count = (octaves * SPECTRUM_BINS_PER_OCTAVE as f64 + 1e-9).floor() as usize + 1;
        let centers_hz: Vec<f64> = (0..count)
            .map(|i| SPECTRUM_F_LO_HZ * (i as f64 / SPECTRUM_BINS_PER_OCTAVE as f64).exp2())
            .collect();
        let half_band = (0.5 / SPECTRUM_BINS_PER_OCTAVE as f64).exp2();
        let bands = centers_hz
            .iter()
            .map(|&c| {
                let lo = ((c / half_band) / bin_hz).ceil() as usize;
                let hi = ((c * half_band) / bin_hz).ceil() as usize;
                if hi > lo {
                    Band::Sum(lo, hi.min(len / 2 + 1))
                } else {
                    let position = c / bin_hz;
                    Band::Interpolate(position.floor() as usize, position.fract())
                }
            })
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(len);
        Self {
            fft,
            window,
            centers_hz,
            bands,
            norm: coherent * coherent,
            buffer: vec![Complex::new(0.0, 0.0); len],
        }
    }

    pub fn fft_len(&self) -> usize {
        self.window.len()
    }

    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    /// Spectrum of `segment` (length [`fft_len`](Self::fft_len)) in dB, rounded to 0.1 dB.
    pub fn compute(&mut self, segment: &[f64]) -> Vec<f64> {
        assert_eq!(segment.len(), self.window.len());
        for ((slot, &x), &w) in self.buffer.iter_mut().zip(segment).zip(&self.window) {
            *slot = Complex::new(x * w, 0.0);
        }
        self.fft.process(&mut self.buffer);
        let power = |k: usize| self.buffer[k].norm_sqr() / self.norm;
        self.bands
            .iter()
            .map(|band| {
                let p = match *band {
                    Band::Sum(lo, hi) => (lo..hi).map(power).sum::<f64>() / HANN_ENBW_BINS,
                    Band::Interpolate(k, frac) => power(k) * (1.0 - frac) + power(k + 1) * frac,
                };
                let db = if p > 0.0 {
                    (10.0 * p.log10()).max(SPECTRUM_FLOOR_DB)
                } else {
                    SPECTRUM_FLOOR_DB
                };
                (db * 10.0).round() / 10.0
            })
            .collect()
    }
}
