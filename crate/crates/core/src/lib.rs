//! Real-time f0-candidate analysis built on an analytic filterbank with a
//! six-term cosine-series envelope.
//!
//! The processing chain is:
//!
//! 1. [`envelope`]: six-term envelope and analytic impulse responses.
//! 2. [`filterbank`]: 80 Hz to 5 kHz, six channels per octave, evaluated at
//!    sample pairs of every hop instant.
//! 3. [`phase`]: instantaneous frequency and cross-channel group delay
//!    computed from phase ratios, with no unwrapping.
//! 4. [`snr`]: per-channel SNR from hop-to-hop variation of the normalized
//!    attributes, mapped through a calibration table.
//! 5. [`f0`]: candidates at stable fixed points of the center-frequency to
//!    instantaneous-frequency map, ranked by SNR.
//!
//! [`pipeline::Analyzer`] ties these together with [`level`] metering and a
//! display [`spectrum`] into timestamped [`pipeline::AnalysisFrame`]s.
//!
//! The numeric modules are generic over [`Real`] (`f32` or `f64`); the
//! aliases below fix the scalar for the common cases.

// NaN parameters must fail validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod envelope;
pub mod error;
pub mod f0;
pub mod filterbank;
pub mod level;
pub mod phase;
pub mod pipeline;
pub mod scalar;
pub mod snr;
pub mod spectrum;
pub mod synth;
pub mod wav;

pub use error::{Error, Result};
pub use scalar::Real;

pub type CosineSeriesEnvelope = envelope::CosineSeriesEnvelope<f64>;
pub type AnalyticImpulseResponse = envelope::AnalyticImpulseResponse<f64>;
pub type ChannelBank = filterbank::ChannelBank<f64>;
pub type ChannelOutputPair = filterbank::ChannelOutputPair<f64>;
pub type AttributeFrame = phase::AttributeFrame<f64>;
pub type F0Candidate = f0::F0Candidate<f64>;
pub type NoteReading = f0::NoteReading<f64>;
pub type LevelFrame = level::LevelFrame<f64>;
pub type LevelMeter = level::LevelMeter<f64>;
pub type Analyzer = pipeline::Analyzer<f64>;

pub type ChannelBankF32 = filterbank::ChannelBank<f32>;
pub type AttributeFrameF32 = phase::AttributeFrame<f32>;
pub type LevelMeterF32 = level::LevelMeter<f32>;
