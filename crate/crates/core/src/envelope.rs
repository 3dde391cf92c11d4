//! Cosine-series envelopes, comparison windows and analytic band-pass impulse
//! responses.
//!
//! The six-term envelope is
//!
//! ```text
//! w_e(t) = sum_{k=0}^{K} a_k cos(2 pi k f_c t / (K c_mag)),   K = 5
//! ```
//!
//! truncated to its natural support `|t| <= T/2` with `T = K c_mag / f_c`, where
//! the alternating coefficient sum makes the envelope vanish. Multiplying by the
//! carrier `exp(j 2 pi f_c t)` yields an analytic impulse response whose output
//! carries no negative-frequency content.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Optimized coefficients `a_0..a_5` of the six-term envelope.
pub const SIX_TERM_COEFFICIENTS: [f64; 6] = [
    0.2624710164,
    0.4265335164,
    0.2250165621,
    0.0726831633,
    0.0125124215,
    0.0007833203,
];

/// Highest harmonic index `K` of the six-term series.
pub const SIX_TERM_ORDER: usize = 5;

/// Default stretch factor `c_mag` relating bandwidth to carrier frequency.
pub const DEFAULT_STRETCH: f64 = 1.05;

/// Kaiser shape parameter used when none is given.
pub const DEFAULT_KAISER_BETA: f64 = 12.0;

const HANN: [f64; 2] = [0.5, 0.5];
const BLACKMAN: [f64; 3] = [0.42, 0.5, 0.08];
// Nuttall's minimum four-term window; its endpoint value is not exactly zero.
const NUTTALL: [f64; 4] = [0.3635819, 0.4891775, 0.1365995, 0.0106411];

/// Envelope shapes available for building analytic filters.
#[derive(Clone, Copy, Debug, PartialEq)]
#[derive(Default)]
pub enum EnvelopeKind {
    #[default]
    SixTerm,
    Hann,
    Blackman,
    Nuttall,
    Kaiser { beta: f64 },
}

impl EnvelopeKind {
    /// Cosine-series coefficients for the kinds that are plain cosine series.
    pub fn cosine_coefficients(&self) -> Option<&'static [f64]> {
        match self {
            EnvelopeKind::SixTerm => Some(&SIX_TERM_COEFFICIENTS),
            EnvelopeKind::Hann => Some(&HANN),
            EnvelopeKind::Blackman => Some(&BLACKMAN),
            EnvelopeKind::Nuttall => Some(&NUTTALL),
            EnvelopeKind::Kaiser { .. } => None,
        }
    }

    /// Window value at `t` for an envelope spanning `support_s` seconds.
    ///
    /// Every kind shares the support of the six-term envelope so that
    /// comparisons are bandwidth matched. Values outside the support are not
    /// truncated here.
    pub fn value<T: Real>(&self, t: T, support_s: T) -> T {
        match self {
            EnvelopeKind::Kaiser { beta } => {
                let beta = T::lit(*beta);
                let r = T::lit(2.0) * t / support_s;
                let arg = (T::one() - r * r).max(T::zero()).sqrt();
                bessel_i0(beta * arg) / bessel_i0(beta)
            }
            _ => {
                let coefficients = self.cosine_coefficients().unwrap_or(&[]);
                cosine_series(coefficients, t / support_s)
            }
        }
    }
}


impl fmt::Display for EnvelopeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnvelopeKind::SixTerm => f.write_str("six-term"),
            EnvelopeKind::Hann => f.write_str("hann"),
            EnvelopeKind::Blackman => f.write_str("blackman"),
            EnvelopeKind::Nuttall => f.write_str("nuttall"),
            EnvelopeKind::Kaiser { beta } => write!(f, "kaiser:{beta}"),
        }
    }
}

impl FromStr for EnvelopeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "six-term" | "sixterm" | "six_term" | "cosine6" => Ok(EnvelopeKind::SixTerm),
            "hann" | "hanning" => Ok(EnvelopeKind::Hann),
            "blackman" => Ok(EnvelopeKind::Blackman),
            "nuttall" => Ok(EnvelopeKind::Nuttall),
            "kaiser" => Ok(EnvelopeKind::Kaiser {
                beta: DEFAULT_KAISER_BETA,
            }),
            other => match other.strip_prefix("kaiser:") {
                Some(beta) => beta
                    .parse::<f64>()
                    .ok()
                    .filter(|b| b.is_finite() && *b >= 0.0)
                    .map(|beta| EnvelopeKind::Kaiser { beta })
                    .ok_or_else(|| Error::UnknownWindow(s.to_string())),
                None => Err(Error::UnknownWindow(s.to_string())),
            },
        }
    }
}

/// Support length `T = K c_mag / f_c` in seconds shared by all envelope kinds.
pub fn support_seconds<T: Real>(carrier_hz: T, stretch: T) -> T {
    T::from_usize_lossy(SIX_TERM_ORDER) * stretch / carrier_hz
}

/// `sum_k a_k cos(2 pi k x)` where `x` is time in units of the support.
fn cosine_series<T: Real>(coefficients: &[f64], x: T) -> T {
    let two_pi = T::TAU();
    coefficients
        .iter()
        .enumerate()
        .fold(T::zero(), |acc, (k, &a)| {
            acc + T::lit(a) * (two_pi * T::from_usize_lossy(k) * x).cos()
        })
}

/// Modified Bessel function of the first kind, order zero (power series).
fn bessel_i0<T: Real>(x: T) -> T {
    let half = x / T::lit(2.0);
    let mut term = T::one();
    let mut sum = T::one();
    let mut k = T::one();
    loop {
        term = term * (half / k) * (half / k);
        sum = sum + term;
        if term < sum * T::epsilon() {
            break sum;
        }
        k = k + T::one();
    }
}

/// A cosine-series envelope `w_e(t; f_c, c_mag)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CosineSeriesEnvelope<T> {
    coefficients: Vec<T>,
    carrier_hz: T,
    stretch: T,
}

impl<T: Real> CosineSeriesEnvelope<T> {
    pub fn new(coefficients: Vec<T>, carrier_hz: T, stretch: T) -> Result<Self> {
        if coefficients.len() < 2 {
            return Err(Error::InvalidParameter(
                "a cosine series needs at least two coefficients".into(),
            ));
        }
        if !(carrier_hz > T::zero()) || !(stretch > T::zero()) {
            return Err(Error::InvalidParameter(format!(
                "carrier ({carrier_hz}) and stretch ({stretch}) must be positive"
            )));
        }
        Ok(Self {
            coefficients,
            carrier_hz,
            stretch,
        })
    }

    /// The six-term envelope with the optimized coefficients.
    pub fn six_term(carrier_hz: T, stretch: T) -> Result<Self> {
        Self::new(
            SIX_TERM_COEFFICIENTS.iter().map(|&a| T::lit(a)).collect(),
            carrier_hz,
            stretch,
        )
    }

    pub fn coefficients(&self) -> &[T] {
        &self.coefficients
    }

    /// Highest harmonic index `K`.
    pub fn terms(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn carrier_hz(&self) -> T {
        self.carrier_hz
    }

    pub fn stretch(&self) -> T {
        self.stretch
    }

    /// Support `T = K c_mag / f_c`; the envelope vanishes at `t = ±T/2`.
    pub fn support_s(&self) -> T {
        T::from_usize_lossy(self.terms()) * self.stretch / self.carrier_hz
    }

    /// Envelope value at `t` seconds. Defined for all `t`; callers truncate.
    pub fn value(&self, t: T) -> T {
        let scale = T::TAU() * self.carrier_hz * t
            / (T::from_usize_lossy(self.terms()) * self.stretch);
        self.coefficients
            .iter()
            .enumerate()
            .fold(T::zero(), |acc, (k, &a)| {
                acc + a * (scale * T::from_usize_lossy(k)).cos()
            })
    }
}

/// Half length `L` of the symmetric sampling grid `t_n = n / f_s`, `|n| <= L`.
pub fn grid_half_len<T: Real>(support_s: T, sample_rate_hz: T) -> usize {
    let half = (support_s * sample_rate_hz).as_f64() / 2.0;
    // Guard exact integers against representation error in the product.
    (half + 1e-9).floor() as usize
}

fn validate_band<T: Real>(carrier_hz: T, stretch: T, sample_rate_hz: T) -> Result<()> {
    let nyquist = sample_rate_hz / T::lit(2.0);
    if !(sample_rate_hz > T::zero()) {
        return Err(Error::InvalidParameter(format!(
            "sample rate must be positive, got {sample_rate_hz}"
        )));
    }
    if !(carrier_hz > T::zero()) || carrier_hz >= nyquist {
        return Err(Error::CarrierOutOfRange {
            carrier_hz: carrier_hz.as_f64(),
            nyquist_hz: nyquist.as_f64(),
        });
    }
    if !(stretch > T::zero()) {
        return Err(Error::InvalidParameter(format!(
            "stretch must be positive, got {stretch}"
        )));
    }
    Ok(())
}

/// Samples of a complex analytic impulse response centered at `t = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct AnalyticImpulseResponse<T> {
    samples: Vec<Complex<T>>,
    sample_rate_hz: T,
    center_hz: T,
    kind: EnvelopeKind,
}

impl<T: Real> AnalyticImpulseResponse<T> {
    pub fn samples(&self) -> &[Complex<T>] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Number of samples on each side of the center tap.
    pub fn half_len(&self) -> usize {
        self.samples.len() / 2
    }

    pub fn center_index(&self) -> usize {
        self.half_len()
    }

    pub fn center(&self) -> Complex<T> {
        self.samples[self.center_index()]
    }

    pub fn sample_rate_hz(&self) -> T {
        self.sample_rate_hz
    }

    pub fn center_hz(&self) -> T {
        self.center_hz
    }

    pub fn kind(&self) -> EnvelopeKind {
        self.kind
    }

    /// Time of sample `index` relative to the center, in seconds.
    pub fn time_s(&self, index: usize) -> T {
        (T::from_usize_lossy(index) - T::from_usize_lossy(self.half_len())) / self.sample_rate_hz
    }
}

/// Six-term analytic impulse response `w_e(t) exp(j 2 pi f_c t)`.
pub fn analytic_impulse_response<T: Real>(
    carrier_hz: T,
    stretch: T,
    sample_rate_hz: T,
) -> Result<AnalyticImpulseResponse<T>> {
    analytic_impulse_response_with(EnvelopeKind::SixTerm, carrier_hz, stretch, sample_rate_hz)
}

/// Analytic impulse response with any envelope kind on the six-term support.
pub fn analytic_impulse_response_with<T: Real>(
    kind: EnvelopeKind,
    carrier_hz: T,
    stretch: T,
    sample_rate_hz: T,
) -> Result<AnalyticImpulseResponse<T>> {
    validate_band(carrier_hz, stretch, sample_rate_hz)?;
    let window = sample_window(kind, carrier_hz, stretch, sample_rate_hz)?;
    let half = window.len() / 2;
    let samples = window
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let t = (T::from_usize_lossy(i) - T::from_usize_lossy(half)) / sample_rate_hz;
            Complex::from_polar(w, T::TAU() * carrier_hz * t)
        })
        .collect();
    Ok(AnalyticImpulseResponse {
        samples,
        sample_rate_hz,
        center_hz: carrier_hz,
        kind,
    })
}

fn sample_window<T: Real>(
    kind: EnvelopeKind,
    carrier_hz: T,
    stretch: T,
    sample_rate_hz: T,
) -> Result<Vec<T>> {
    let support = support_seconds(carrier_hz, stretch);
    let half = grid_half_len(support, sample_rate_hz);
    let envelope = match kind {
        EnvelopeKind::SixTerm => Some(CosineSeriesEnvelope::six_term(carrier_hz, stretch)?),
        _ => None,
    };
    Ok((0..2 * half + 1)
        .map(|i| {
            let n = i as isize - half as isize;
            let t = T::from_isize(n).unwrap() / sample_rate_hz;
            match &envelope {
                Some(env) => env.value(t),
                None => kind.value(t, support),
            }
        })
        .collect())
}

/// Real window samples on the same grid as the analytic impulse response.
#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonWindow<T> {
    pub kind: EnvelopeKind,
    pub samples: Vec<T>,
    pub sample_rate_hz: T,
    pub support_s: T,
}

impl<T: Real> ComparisonWindow<T> {
    pub fn center_index(&self) -> usize {
        self.samples.len() / 2
    }
}

/// Evaluates a standard window on the six-term grid for `f_c`, `c_mag`, `f_s`.
pub fn comparison_window<T: Real>(
    kind: EnvelopeKind,
    carrier_hz: T,
    stretch: T,
    sample_rate_hz: T,
) -> Result<ComparisonWindow<T>> {
    validate_band(carrier_hz, stretch, sample_rate_hz)?;
    Ok(ComparisonWindow {
        kind,
        samples: sample_window(kind, carrier_hz, stretch, sample_rate_hz)?,
        sample_rate_hz,
        support_s: support_seconds(carrier_hz, stretch),
    })
}
