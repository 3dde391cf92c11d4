//! Deterministic test-signal synthesis.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::scalar::Real;

/// `amplitude * cos(2 pi f n / f_s + phase)` for `n` in `0..len`.
pub fn cosine<T: Real>(freq_hz: f64, amplitude: f64, phase: f64, sample_rate_hz: f64, len: usize) -> Vec<T> {
    let w = std::f64::consts::TAU * freq_hz / sample_rate_hz;
    (0..len)
        .map(|n| T::lit(amplitude * (w * n as f64 + phase).cos()))
        .collect()
}

/// Zero-mean Gaussian white noise with standard deviation `std_dev`.
pub fn white_noise<T: Real>(seed: u64, std_dev: f64, len: usize) -> Vec<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            T::lit(std_dev * z)
        })
        .collect()
}

/// Noise standard deviation that puts a unit-amplitude sinusoid (power 1/2)
/// at `snr_db` over full-band white noise.
pub fn noise_std_for_snr(snr_db: f64) -> f64 {
    (0.5 * 10f64.powf(-snr_db / 10.0)).sqrt()
}

/// Unit-amplitude sinusoid plus white noise at a full-band SNR.
pub fn tone_in_noise<T: Real>(
    freq_hz: f64,
    snr_db: f64,
    seed: u64,
    sample_rate_hz: f64,
    len: usize,
) -> Vec<T> {
    let noise = white_noise::<f64>(seed, noise_std_for_snr(snr_db), len);
    let w = std::f64::consts::TAU * freq_hz / sample_rate_hz;
    noise
        .into_iter()
        .enumerate()
        .map(|(n, e)| T::lit((w * n as f64 + 0.3).sin() + e))
        .collect()
}

/// Linear chirp from `f_start` to `f_end` Hz over `len` samples.
pub fn chirp<T: Real>(f_start: f64, f_end: f64, amplitude: f64, sample_rate_hz: f64, len: usize) -> Vec<T> {
    let duration = len as f64 / sample_rate_hz;
    let rate = (f_end - f_start) / duration;
    (0..len)
        .map(|n| {
            let t = n as f64 / sample_rate_hz;
            T::lit(amplitude * (std::f64::consts::TAU * (f_start * t + 0.5 * rate * t * t)).sin())
        })
        .collect()
}
