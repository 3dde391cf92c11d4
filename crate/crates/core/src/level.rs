//! dBFS level indicators, C-weighted sound level with fast/slow ballistics,
//! and single-offset SPL calibration.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// IEC 61672 C-weighting pole frequencies.
pub const C_POLE_LOW_HZ: f64 = 20.598997;
pub const C_POLE_HIGH_HZ: f64 = 12194.217;
/// Lowest sample rate at which the discretized C-weighting stays accurate.
pub const MIN_C_WEIGHT_RATE_HZ: f64 = 32000.0;

pub const FAST_TIME_CONSTANT_S: f64 = 0.125;
pub const SLOW_TIME_CONSTANT_S: f64 = 1.0;
pub const SMOOTHED_RMS_TIME_CONSTANT_S: f64 = 0.5;
/// Bottom of the level display.
pub const DISPLAY_FLOOR_DB: f64 = -100.0;

/// Transposed direct form II biquad with a normalized `a0`.
#[derive(Clone, Copy, Debug)]
struct Biquad<T> {
    coeffs: [f64; 5],
    b: [T; 3],
    a: [T; 2],
    state: [T; 2],
}

impl<T: Real> Biquad<T> {
    fn new(b0: f64, b1: f64, b2: f64, a1: f64, a2: f64) -> Self {
        Self {
            coeffs: [b0, b1, b2, a1, a2],
            b: [T::lit(b0), T::lit(b1), T::lit(b2)],
            a: [T::lit(a1), T::lit(a2)],
            state: [T::zero(); 2],
        }
    }

    #[inline]
    fn process(&mut self, x: T) -> T {
        let y = self.b[0] * x + self.state[0];
        self.state[0] = self.b[1] * x - self.a[0] * y + self.state[1];
        self.state[1] = self.b[2] * x - self.a[1] * y;
        y
    }

    fn response(&self, omega: f64) -> Complex<f64> {
        let [b0, b1, b2, a1, a2] = self.coeffs;
        let z1 = Complex::from_polar(1.0, -omega);
        let z2 = z1 * z1;
        (b0 + z1 * b1 + z2 * b2) / (1.0 + z1 * a1 + z2 * a2)
    }
}

/// Digital C-weighting filter normalized to 0 dB at 1 kHz.
///
/// The low-frequency double pole and the `s^2` zeros use a bilinear transform
/// pre-warped at 1 kHz. The high double pole is a magnitude-matched biquad
/// (impulse-invariant poles, numerator fitted to the analog magnitude at DC,
/// Nyquist and the pole frequency) since the bilinear transform's warping
/// near Nyquist would put the 8 kHz response about 0.7 dB low at 44.1 kHz.
#[derive(Clone, Debug)]
pub struct CWeighting<T> {
    sample_rate_hz: f64,
    high_pass: Biquad<T>,
    low_pass: Biquad<T>,
    gain: T,
    gain_f64: f64,
}

impl<T: Real> CWeighting<T> {
    pub fn new(sample_rate_hz: f64) -> Result<Self> {
        if !(sample_rate_hz >= MIN_C_WEIGHT_RATE_HZ) {
            return Err(Error::UnsupportedRate(sample_rate_hz));
        }
        let w1 = std::f64::consts::TAU * C_POLE_LOW_HZ;
        let w4 = std::f64::consts::TAU * C_POLE_HIGH_HZ;
        let w_ref = std::f64::consts::TAU * 1000.0;
        let period = 1.0 / sample_rate_hz;

        // (s / (s + w1))^2 with s = k (1 - z^-1) / (1 + z^-1)
        let k = w_ref / (w_ref * period / 2.0).tan();
        let a0 = (k + w1) * (k + w1);
        let high_pass = Biquad::new(
            k * k / a0,
            -2.0 * k * k / a0,
            k * k / a0,
            2.0 * (k + w1) * (w1 - k) / a0,
            (w1 - k) * (w1 - k) / a0,
        );

        // (w4 / (s + w4))^2, critically damped (Q = 1/2)
        let q = 0.5;
        let a1 = -2.0 * (-w4 * period).exp();
        let a2 = (-2.0 * w4 * period).exp();
        let big_a0 = (1.0 + a1 + a2).powi(2);
        let big_a1 = (1.0 - a1 + a2).powi(2);
        let big_a2 = -4.0 * a2;
        let s2 = (w4 * period / 2.0).sin().powi(2);
        let phi0 = 1.0 - s2;
        let phi1 = s2;
        let phi2 = 4.0 * phi0 * phi1;
        let r1 = (big_a0 * phi0 + big_a1 * phi1 + big_a2 * phi2) * q * q;
        let big_b0 = big_a0;
        let big_b1 = (r1 - big_b0 * phi0) / phi1;
        let b0 = 0.5 * (big_b0.sqrt() + big_b1.max(0.0).sqrt());
        let b1 = big_b0.sqrt() - b0;
        let low_pass = Biquad::new(b0, b1, 0.0, a1, a2);

        let mut filter = Self {
            sample_rate_hz,
            high_pass,
            low_pass,
            gain: T::one(),
            gain_f64: 1.0,
        };
        let at_1k = filter.unnormalized_response(1000.0).norm();
        filter.gain_f64 = 1.0 / at_1k;
        filter.gain = T::lit(filter.gain_f64);
        Ok(filter)
    }

    fn unnormalized_response(&self, freq_hz: f64) -> Complex<f64> {
        let omega = std::f64::consts::TAU * freq_hz / self.sample_rate_hz;
        self.high_pass.response(omega) * self.low_pass.response(omega)
    }

    /// Magnitude of the digital filter at `freq_hz`, in dB.
    pub fn magnitude_db(&self, freq_hz: f64) -> f64 {
        20.0 * (self.gain_f64 * self.unnormalized_response(freq_hz).norm()).log10()
    }

    #[inline]
    pub fn process(&mut self, x: T) -> T {
        self.low_pass.process(self.high_pass.process(x * self.gain))
    }

    pub fn process_block(&mut self, samples: &[T]) -> Vec<T> {
        samples.iter().map(|&x| self.process(x)).collect()
    }

    pub fn reset(&mut self) {
        self.high_pass.state = [T::zero(); 2];
        self.low_pass.state = [T::zero(); 2];
    }
}

/// Applies C-weighting to a block starting from rest.
pub fn c_weight<T: Real>(samples: &[T], sample_rate_hz: f64) -> Result<Vec<T>> {
    Ok(CWeighting::new(sample_rate_hz)?.process_block(samples))
}

/// Power to dB, clamped at the display floor.
pub fn power_to_db<T: Real>(power: T) -> T {
    let floor = T::lit(DISPLAY_FLOOR_DB);
    if power > T::zero() {
        (T::lit(10.0) * power.log10()).max(floor)
    } else {
        floor
    }
}

/// Level readings for one block.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LevelFrame<T> {
    pub dbfs_peak: T,
    pub dbfs_rms: T,
    pub dbfs_rms_smoothed: T,
    /// C-weighted fast (125 ms) level in dBFS.
    pub dbfs_c_fast: T,
    /// C-weighted slow (1 s) level in dBFS.
    pub dbfs_c_slow: T,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub spl_fast_db: Option<T>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub spl_slow_db: Option<T>,
    pub calibrated: bool,
}

/// SPL offset against a reference level at the microphone position.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationState {
    /// SPL = C-weighted dBFS + offset.
    pub offset_db: f64,
    pub reference_spl_db: f64,
    pub timestamp: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationPolicy {
    pub allowed_references_db: Vec<f64>,
    /// Largest accepted variance of the slow level over the stability window.
    pub max_variance_db2: f64,
    pub stability_window_s: f64,
}

impl Default for CalibrationPolicy {
    fn default() -> Self {
        Self {
            allowed_references_db: vec![60.0, 65.0, 70.0, 75.0, 80.0],
            max_variance_db2: 1.0,
            stability_window_s: 2.0,
        }
    }
}

impl CalibrationPolicy {
    pub fn check_reference(&self, reference_spl_db: f64) -> Result<()> {
        if self
            .allowed_references_db
            .iter()
            .any(|r| (r - reference_spl_db).abs() < 1e-9)
        {
            Ok(())
        } else {
            Err(Error::InvalidReference(reference_spl_db))
        }
    }
}

/// Derives the SPL offset from a stable measurement. `recent_slow_db` are
/// the slow C-weighted readings over the stability window.
pub fn calibrate_spl(
    measured_dbfs_c_slow: f64,
    reference_spl_db: f64,
    recent_slow_db: &[f64],
    policy: &CalibrationPolicy,
) -> Result<CalibrationState> {
    policy.check_reference(reference_spl_db)?;
    let variance = variance(recent_slow_db);
    if !(variance < policy.max_variance_db2) {
        return Err(Error::UnstableSignal { variance_db2: variance });
    }
    Ok(CalibrationState {
        offset_db: reference_spl_db - measured_dbfs_c_slow,
        reference_spl_db,
        timestamp: chrono::Utc::now().to_rfc3339(),
    })
}

fn variance(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64
}

/// Stateful meter fed block by block.
#[derive(Clone, Debug)]
pub struct LevelMeter<T> {
    weighting: CWeighting<T>,
    alpha_smoothed: T,
    alpha_fast: T,
    alpha_slow: T,
    ms_smoothed: T,
    ms_fast: T,
    ms_slow: T,
    calibration: Option<CalibrationState>,
}

fn smoothing_coefficient<T: Real>(time_constant_s: f64, sample_rate_hz: f64) -> T {
    T::lit(1.0 - (-1.0 / (time_constant_s * sample_rate_hz)).exp())
}

impl<T: Real> LevelMeter<T> {
    pub fn new(sample_rate_hz: f64) -> Result<Self> {
        Ok(Self {
            weighting: CWeighting::new(sample_rate_hz)?,
            alpha_smoothed: smoothing_coefficient(SMOOTHED_RMS_TIME_CONSTANT_S, sample_rate_hz),
            alpha_fast: smoothing_coefficient(FAST_TIME_CONSTANT_S, sample_rate_hz),
            alpha_slow: smoothing_coefficient(SLOW_TIME_CONSTANT_S, sample_rate_hz),
            ms_smoothed: T::zero(),
            ms_fast: T::zero(),
            ms_slow: T::zero(),
            calibration: None,
        })
    }

    pub fn calibration(&self) -> Option<&CalibrationState> {
        self.calibration.as_ref()
    }

    pub fn set_calibration(&mut self, calibration: Option<CalibrationState>) {
        self.calibration = calibration;
    }

    pub fn reset(&mut self) {
        self.weighting.reset();
        self.ms_smoothed = T::zero();
        self.ms_fast = T::zero();
        self.ms_slow = T::zero();
    }

    pub fn process(&mut self, block: &[T]) -> LevelFrame<T> {
        let mut peak = T::zero();
        let mut energy = T::zero();
        for &x in block {
            peak = peak.max(x.abs());
            let power = x * x;
            energy = energy + power;
            self.ms_smoothed = self.ms_smoothed + self.alpha_smoothed * (power - self.ms_smoothed);
            let c = self.weighting.process(x);
            let c_power = c * c;
            self.ms_fast = self.ms_fast + self.alpha_fast * (c_power - self.ms_fast);
            self.ms_slow = self.ms_slow + self.alpha_slow * (c_power - self.ms_slow);
        }
        let mean_square = if block.is_empty() {
            T::zero()
        } else {
            energy / T::from_usize_lossy(block.len())
        };
        let dbfs_c_fast = power_to_db(self.ms_fast);
        let dbfs_c_slow = power_to_db(self.ms_slow);
        let offset = self.calibration.as_ref().map(|c| T::lit(c.offset_db));
        LevelFrame {
            dbfs_peak: power_to_db(peak * peak),
            dbfs_rms: power_to_db(mean_square),
            dbfs_rms_smoothed: power_to_db(self.ms_smoothed),
            dbfs_c_fast,
            dbfs_c_slow,
            spl_fast_db: offset.map(|o| dbfs_c_fast + o),
            spl_slow_db: offset.map(|o| dbfs_c_slow + o),
            calibrated: offset.is_some(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, amplitude: f64, seconds: f64) -> Vec<f64> {
        let fs = 44100.0;
        (0..(seconds * fs) as usize)
            .map(|n| amplitude * (std::f64::consts::TAU * freq * n as f64 / fs).sin())
            .collect()
    }

    #[test]
    fn full_scale_square_reads_zero() {
        let mut meter = LevelMeter::<f64>::new(44100.0).unwrap();
        let square: Vec<f64> = (0..4410).map(|n| if (n / 50) % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let frame = meter.process(&square);
        assert!(frame.dbfs_peak.abs() < 1e-12);
        assert!(frame.dbfs_rms.abs() < 1e-12);
        assert!(!frame.calibrated && frame.spl_fast_db.is_none());
    }

    #[test]
    fn full_scale_sine_rms() {
        let mut meter = LevelMeter::<f64>::new(44100.0).unwrap();
        let frame = meter.process(&sine(1000.0, 1.0, 1.0));
        assert!((frame.dbfs_rms + 3.0103).abs() < 0.01, "{}", frame.dbfs_rms);
    }

    #[test]
    fn silence_reads_floor() {
        let mut meter = LevelMeter::<f64>::new(44100.0).unwrap();
        let frame = meter.process(&[0.0; 1000]);
        assert_eq!(frame.dbfs_peak, DISPLAY_FLOOR_DB);
        assert_eq!(frame.dbfs_rms, DISPLAY_FLOOR_DB);
        assert_eq!(frame.dbfs_c_slow, DISPLAY_FLOOR_DB);
    }

    #[test]
    fn unsupported_rate() {
        assert!(matches!(CWeighting::<f64>::new(16000.0), Err(Error::UnsupportedRate(_))));
        assert!(c_weight(&[0.0f32; 4], 22050.0).is_err());
    }

    #[test]
    fn calibration_arithmetic() {
        let policy = CalibrationPolicy::default();
        let state = calibrate_spl(-30.0, 70.0, &[-30.0, -30.2, -29.9], &policy).unwrap();
        assert_eq!(state.offset_db, 100.0);
        assert_eq!(-25.0 + state.offset_db, 75.0);
        let state = calibrate_spl(0.0, 70.0, &[], &policy).unwrap();
        assert_eq!(state.offset_db, 70.0);
    }

    #[test]
    fn calibration_rejects_unstable_or_unknown_reference() {
        let policy = CalibrationPolicy::default();
        // variance of {-31.5, -28.5, ...} alternating is 2.25; of +-sqrt(3) is 3
        let s3 = 3f64.sqrt();
        let unstable = [-30.0 - s3, -30.0 + s3, -30.0 - s3, -30.0 + s3];
        match calibrate_spl(-30.0, 70.0, &unstable, &policy) {
            Err(Error::UnstableSignal { variance_db2 }) => assert!((variance_db2 - 3.0).abs() < 1e-9),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            calibrate_spl(-30.0, 72.0, &[], &policy),
            Err(Error::InvalidReference(_))
        ));
    }

    #[test]
    fn calibrated_meter_reports_spl() {
        let mut meter = LevelMeter::<f64>::new(44100.0).unwrap();
        meter.set_calibration(Some(CalibrationState {
            offset_db: 100.0,
            reference_spl_db: 70.0,
            timestamp: String::new(),
        }));
        let frame = meter.process(&sine(1000.0, 0.1, 10.0));
        assert!(frame.calibrated);
        let spl = frame.spl_slow_db.unwrap();
        assert!((spl - (frame.dbfs_c_slow + 100.0)).abs() < 1e-12);
        // 0.1 amplitude sine: -23.01 dBFS C-weighted at 1 kHz
        assert!((spl - 76.99).abs() < 0.05, "{spl}");
    }
}
