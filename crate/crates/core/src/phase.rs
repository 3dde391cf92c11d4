//! Unwrapping-free phase attributes: instantaneous frequency from consecutive
//! samples of one channel and group delay from adjacent channels.

use num_complex::Complex;

use crate::filterbank::{ChannelBank, ChannelOutputPair};
use crate::scalar::Real;

/// Outputs below this magnitude (relative to full scale 1.0) carry no usable phase.
pub const INVALID_MAGNITUDE: f64 = 1e-12;

/// Angle in `(-pi, pi]`.
#[inline]
pub fn principal_angle<T: Real>(z: Complex<T>) -> T {
    let a = z.im.atan2(z.re);
    if a <= -T::PI() {
        T::PI()
    } else {
        a
    }
}

#[inline]
fn usable<T: Real>(z: Complex<T>) -> bool {
    z.norm() >= T::lit(INVALID_MAGNITUDE) && z.re.is_finite() && z.im.is_finite()
}

/// `f_s / (2 pi) * angle(y[n+1] / y[n])`, in Hz within `(-f_s/2, f_s/2]`.
///
/// Returns `None` when `|y[n]|` is too small to define a phase.
pub fn instantaneous_frequency<T: Real>(pair: &ChannelOutputPair<T>, sample_rate_hz: T) -> Option<T> {
    if !usable(pair.y_n) || !usable(pair.y_np1) {
        return None;
    }
    // angle(a / b) == angle(a * conj(b)) without the division.
    let turn = principal_angle(pair.y_np1 * pair.y_n.conj());
    Some(sample_rate_hz * turn / T::TAU())
}

/// `-(1 / delta_omega) * angle(y[k+1] / y[k])` in seconds.
pub fn group_delay<T: Real>(y_k: Complex<T>, y_kp1: Complex<T>, delta_omega: T) -> Option<T> {
    if !usable(y_k) || !usable(y_kp1) || !(delta_omega > T::zero()) {
        return None;
    }
    Some(-principal_angle(y_kp1 * y_k.conj()) / delta_omega)
}

/// Phase-derived attributes of one channel at one hop instant.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ChannelAttributes<T> {
    pub magnitude: T,
    /// Phase of `y[n]` in `(-pi, pi]`.
    pub phase: Option<T>,
    pub inst_freq_hz: Option<T>,
    /// Instantaneous frequency over the channel center.
    pub norm_inst_freq: Option<T>,
    pub group_delay_s: Option<T>,
    /// Group delay in periods of the channel center.
    pub norm_group_delay: Option<T>,
    /// Filled by the SNR estimator.
    pub snr_db: Option<T>,
    pub warmup: bool,
}

impl<T: Real> ChannelAttributes<T> {
    pub fn is_valid(&self) -> bool {
        self.inst_freq_hz.is_some()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttributeFrame<T> {
    pub hop_time_s: T,
    pub sample_index: usize,
    /// Any channel still in warm-up.
    pub warmup: bool,
    pub channels: Vec<ChannelAttributes<T>>,
}

/// Builds the attribute frame for one hop instant. `pairs` must hold one entry
/// per bank channel in channel order. The last channel reuses the group delay
/// of its lower neighbour.
pub fn assemble_attribute_frame<T: Real>(
    bank: &ChannelBank<T>,
    pairs: &[ChannelOutputPair<T>],
) -> AttributeFrame<T> {
    assert_eq!(pairs.len(), bank.len(), "one output pair per channel");
    let fs = bank.sample_rate_hz();
    let count = pairs.len();
    let delays: Vec<Option<T>> = (0..count.saturating_sub(1))
        .map(|k| group_delay(pairs[k].y_n, pairs[k + 1].y_n, bank.delta_omega(k)))
        .collect();

    let channels = pairs
        .iter()
        .enumerate()
        .map(|(k, pair)| {
            let center = bank.center_hz(k);
            let phase = usable(pair.y_n).then(|| principal_angle(pair.y_n));
            let inst_freq_hz = instantaneous_frequency(pair, fs);
            let group_delay_s = if count < 2 {
                None
            } else {
                delays[k.min(count - 2)]
            };
            ChannelAttributes {
                magnitude: pair.y_n.norm(),
                phase,
                inst_freq_hz,
                norm_inst_freq: inst_freq_hz.map(|f| f / center),
                group_delay_s,
                norm_group_delay: group_delay_s.map(|tau| tau * center),
                snr_db: None,
                warmup: pair.warmup,
            }
        })
        .collect();

    AttributeFrame {
        hop_time_s: pairs.first().map(|p| p.hop_time_s).unwrap_or_else(T::zero),
        sample_index: pairs.first().map(|p| p.sample_index).unwrap_or(0),
        warmup: pairs.iter().any(|p| p.warmup),
        channels,
    }
}
