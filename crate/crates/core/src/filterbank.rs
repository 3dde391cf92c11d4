//! Geometrically spaced bank of analytic band-pass filters evaluated at hop
//! instants.
//!
//! Each channel is a centered (non-causal) convolution with its analytic
//! impulse response. Outputs are produced only at sample pairs `(n, n + 1)`
//! of every hop instant, which is all the phase attributes need.

use num_complex::Complex;

use crate::envelope::{analytic_impulse_response_with, AnalyticImpulseResponse, EnvelopeKind};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// One analysis channel of a [`ChannelBank`].
#[derive(Clone, Debug)]
pub struct Channel<T> {
    index: usize,
    center_hz: T,
    response: AnalyticImpulseResponse<T>,
    // Taps in input order: y[n] = sum_j taps[j] * x[n - L + j].
    taps_re: Vec<T>,
    taps_im: Vec<T>,
}

impl<T: Real> Channel<T> {
    fn new(index: usize, response: AnalyticImpulseResponse<T>) -> Self {
        let (taps_re, taps_im) = response.samples().iter().rev().map(|c| (c.re, c.im)).unzip();
        Self {
            index,
            center_hz: response.center_hz(),
            response,
            taps_re,
            taps_im,
        }
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn center_hz(&self) -> T {
        self.center_hz
    }

    pub fn response(&self) -> &AnalyticImpulseResponse<T> {
        &self.response
    }

    pub fn half_len(&self) -> usize {
        self.response.half_len()
    }

    /// Output for the input segment `x[n - L ..= n + L]` of a real signal.
    #[inline]
    pub fn output_at(&self, segment: &[T]) -> Complex<T> {
        debug_assert_eq!(segment.len(), self.taps_re.len());
        let mut re = T::zero();
        let mut im = T::zero();
        for ((&x, &hr), &hi) in segment.iter().zip(&self.taps_re).zip(&self.taps_im) {
            re = re + hr * x;
            im = im + hi * x;
        }
        Complex::new(re, im)
    }

    /// Outputs at `n` and `n + 1` from the segment `x[n - L ..= n + 1 + L]`.
    #[inline]
    pub fn pair_at(&self, segment: &[T]) -> (Complex<T>, Complex<T>) {
        let len = self.taps_re.len();
        (self.output_at(&segment[..len]), self.output_at(&segment[1..=len]))
    }
}

/// Ordered analytic filters with centers `f_lo * 2^(m / per_octave)`.
#[derive(Clone, Debug)]
pub struct ChannelBank<T> {
    channels: Vec<Channel<T>>,
    per_octave: usize,
    f_lo: T,
    f_hi: T,
    sample_rate_hz: T,
    stretch: T,
    kind: EnvelopeKind,
}

impl<T: Real> ChannelBank<T> {
    /// Six-term bank from `f_lo` up to the first center at or above `f_hi`.
    pub fn design(f_lo: T, f_hi: T, per_octave: usize, stretch: T, sample_rate_hz: T) -> Result<Self> {
        Self::design_with(EnvelopeKind::SixTerm, f_lo, f_hi, per_octave, stretch, sample_rate_hz)
    }

    pub fn design_with(
        kind: EnvelopeKind,
        f_lo: T,
        f_hi: T,
        per_octave: usize,
        stretch: T,
        sample_rate_hz: T,
    ) -> Result<Self> {
        let nyquist = sample_rate_hz / T::lit(2.0);
        if per_octave == 0 {
            return Err(Error::InvalidParameter("per_octave must be at least 1".into()));
        }
        if !(f_lo > T::zero()) || f_hi < f_lo || f_hi >= nyquist {
            return Err(Error::InvalidParameter(format!(
                "need 0 < f_lo <= f_hi < f_s/2, got f_lo={f_lo}, f_hi={f_hi}, f_s={sample_rate_hz}"
            )));
        }
        let octaves = (f_hi / f_lo).log2().as_f64();
        let count = ((per_octave as f64 * octaves) - 1e-9).ceil().max(0.0) as usize + 1;
        let centers: Vec<T> = (0..count)
            .map(|m| f_lo * (T::from_usize_lossy(m) / T::from_usize_lossy(per_octave)).exp2())
            .collect();
        let top = *centers.last().unwrap();
        if top >= nyquist {
            return Err(Error::InvalidParameter(format!(
                "top channel center {top} Hz reaches the Nyquist frequency {nyquist} Hz"
            )));
        }
        let mut bank = Self::from_centers(kind, &centers, per_octave, stretch, sample_rate_hz)?;
        bank.f_hi = f_hi;
        Ok(bank)
    }

    /// Bank with explicit, strictly increasing centers. `per_octave` records
    /// the nominal spacing used for group-delay normalization downstream.
    pub fn from_centers(
        kind: EnvelopeKind,
        centers: &[T],
        per_octave: usize,
        stretch: T,
        sample_rate_hz: T,
    ) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::InvalidParameter("a bank needs at least one channel".into()));
        }
        if centers.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("channel centers must strictly increase".into()));
        }
        let channels = centers
            .iter()
            .enumerate()
            .map(|(index, &fc)| {
                analytic_impulse_response_with(kind, fc, stretch, sample_rate_hz)
                    .map(|response| Channel::new(index, response))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            channels,
            per_octave,
            f_lo: centers[0],
            f_hi: *centers.last().unwrap(),
            sample_rate_hz,
            stretch,
            kind,
        })
    }

    pub fn channels(&self) -> &[Channel<T>] {
        &self.channels
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn center_hz(&self, index: usize) -> T {
        self.channels[index].center_hz
    }

    pub fn centers(&self) -> impl Iterator<Item = T> + '_ {
        self.channels.iter().map(|c| c.center_hz)
    }

    pub fn per_octave(&self) -> usize {
        self.per_octave
    }

    /// Nominal spacing in octaves.
    pub fn delta_log2(&self) -> T {
        T::one() / T::from_usize_lossy(self.per_octave)
    }

    /// Angular spacing `2 pi (f_{k+1} - f_k)` in rad/s. Requires `k + 1 < len`.
    pub fn delta_omega(&self, k: usize) -> T {
        T::TAU() * (self.channels[k + 1].center_hz - self.channels[k].center_hz)
    }

    pub fn f_lo(&self) -> T {
        self.f_lo
    }

    pub fn f_hi(&self) -> T {
        self.f_hi
    }

    pub fn sample_rate_hz(&self) -> T {
        self.sample_rate_hz
    }

    pub fn stretch(&self) -> T {
        self.stretch
    }

    pub fn kind(&self) -> EnvelopeKind {
        self.kind
    }

    /// Largest channel half length, i.e. the look-ahead needed per instant.
    pub fn max_half_len(&self) -> usize {
        self.channels.iter().map(Channel::half_len).max().unwrap_or(0)
    }

    /// Channel whose center is closest to `freq_hz` on a log axis.
    pub fn nearest_channel(&self, freq_hz: T) -> usize {
        let target = freq_hz.log2();
        let mut best = 0;
        let mut best_distance = T::infinity();
        for (i, c) in self.channels.iter().enumerate() {
            let distance = (c.center_hz.log2() - target).abs();
            if distance < best_distance {
                best = i;
                best_distance = distance;
            }
        }
        best
    }

    /// Evaluates every channel at instant `n` and `n + 1`.
    ///
    /// `segment` holds `x[n - Lmax ..= n + 1 + Lmax]` where `Lmax` is
    /// [`max_half_len`](Self::max_half_len).
    pub fn evaluate(&self, segment: &[T], sample_index: usize) -> Vec<ChannelOutputPair<T>> {
        let max_half = self.max_half_len();
        assert_eq!(segment.len(), 2 * max_half + 2, "segment must span the widest channel");
        let time_s = T::from_usize_lossy(sample_index) / self.sample_rate_hz;
        self.channels
            .iter()
            .map(|channel| {
                let offset = max_half - channel.half_len();
                let len = channel.response.len();
                let (y_n, y_np1) = channel.pair_at(&segment[offset..offset + len + 1]);
                ChannelOutputPair {
                    channel_index: channel.index,
                    y_n,
                    y_np1,
                    hop_time_s: time_s,
                    sample_index,
                    warmup: sample_index < len,
                }
            })
            .collect()
    }
}

/// Channel outputs at two consecutive samples `n`, `n + 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelOutputPair<T> {
    pub channel_index: usize,
    pub y_n: Complex<T>,
    pub y_np1: Complex<T>,
    pub hop_time_s: T,
    pub sample_index: usize,
    /// Set while the response still overlaps the zero padding before the stream.
    pub warmup: bool,
}

/// All channel outputs at one hop instant.
#[derive(Clone, Debug, PartialEq)]
pub struct HopOutputs<T> {
    pub sample_index: usize,
    pub time_s: T,
    pub pairs: Vec<ChannelOutputPair<T>>,
}

/// Evaluates the bank at instants `0, hop, 2 hop, ...` below `audio.len()`,
/// treating samples outside the block as zero.
pub fn process_hop<T: Real>(
    bank: &ChannelBank<T>,
    audio: &[T],
    hop_samples: usize,
) -> Result<Vec<HopOutputs<T>>> {
    if hop_samples == 0 {
        return Err(Error::InvalidParameter("hop_samples must be at least 1".into()));
    }
    let max_half = bank.max_half_len();
    let mut padded = vec![T::zero(); audio.len() + 2 * max_half + 2];
    padded[max_half..max_half + audio.len()].copy_from_slice(audio);
    Ok((0..audio.len())
        .step_by(hop_samples)
        .map(|n| {
            let pairs = bank.evaluate(&padded[n..n + 2 * max_half + 2], n);
            HopOutputs {
                sample_index: n,
                time_s: T::from_usize_lossy(n) / bank.sample_rate_hz,
                pairs,
            }
        })
        .collect())
}
