use num_complex::Complex;
use phasevox::filterbank::{process_hop, ChannelBank, ChannelOutputPair};
use phasevox::phase::{assemble_attribute_frame, instantaneous_frequency, AttributeFrame};
use phasevox::synth;
use proptest::prelude::*;
use std::f64::consts::PI;

const FS: f64 = 44100.0;

fn full_bank() -> ChannelBank<f64> {
    ChannelBank::design(80.0, 5000.0, 6, 1.05, FS).unwrap()
}

fn frames(bank: &ChannelBank<f64>, x: &[f64], hop: usize) -> Vec<AttributeFrame<f64>> {
    process_hop(bank, x, hop)
        .unwrap()
        .iter()
        .map(|h| assemble_attribute_frame(bank, &h.pairs))
        .collect()
}

fn steady<'a>(bank: &ChannelBank<f64>, frames: &'a [AttributeFrame<f64>], len: usize) -> Vec<&'a AttributeFrame<f64>> {
    let guard = bank.max_half_len() * 2 + 2;
    frames
        .iter()
        .filter(|f| !f.warmup && f.sample_index + guard < len)
        .collect()
}

#[test]
fn tone_dominates_neighbouring_channels() {
    let bank = full_bank();
    let x = synth::cosine::<f64>(220.0, 0.5, 0.1, FS, 44100);
    let all = frames(&bank, &x, 220);
    for frame in steady(&bank, &all, x.len()) {
        for (m, attrs) in frame.channels.iter().enumerate() {
            if (bank.center_hz(m) / 220.0).log2().abs() <= 1.0 / 6.0 {
                let f = attrs.inst_freq_hz.unwrap();
                assert!((f - 220.0).abs() < 1.0, "channel {m}: {f}");
            }
        }
    }
}

#[test]
fn silence_is_invalid_everywhere() {
    let bank = full_bank();
    for frame in frames(&bank, &vec![0.0; 8000], 400) {
        assert!(frame.channels.iter().all(|a| {
            a.phase.is_none() && a.inst_freq_hz.is_none() && a.group_delay_s.is_none() && a.snr_db.is_none()
        }));
    }
}

#[test]
fn group_delay_points_at_impulse() {
    let bank = full_bank();
    let n0 = 20_000usize;
    let mut x = vec![0.0; 40_000];
    x[n0] = 1.0;
    let hop = 7;
    let all = frames(&bank, &x, hop);
    let mut checked = 0;
    for k in 0..bank.len() - 1 {
        let period = FS / bank.center_hz(k);
        // Both channels of the pair must still see the impulse.
        let reach = bank.channels()[k + 1].half_len() as i64;
        for frame in &all {
            let offset = frame.sample_index as i64 - n0 as i64;
            if offset.abs() >= reach {
                continue;
            }
            // The far tails of the envelope fall below the validity threshold.
            let Some(tau) = frame.channels[k].group_delay_s else {
                assert!(offset.abs() as f64 > 0.9 * reach as f64, "channel {k}, offset {offset}");
                continue;
            };
            let pointed = frame.sample_index as f64 + tau * FS;
            assert!(
                (pointed - n0 as f64).abs() <= 0.05 * period,
                "channel {k}, n {}: points to {pointed}",
                frame.sample_index
            );
            checked += 1;
        }
    }
    assert!(checked > 1000, "{checked}");
}

#[test]
fn stationary_tone_has_constant_group_delay() {
    let bank = full_bank();
    let x = synth::cosine::<f64>(220.0, 0.5, 0.0, FS, (FS * 1.5) as usize);
    let all = frames(&bank, &x, 220);
    let m = bank.nearest_channel(220.0);
    let period = 1.0 / bank.center_hz(m);
    let window: Vec<f64> = steady(&bank, &all, x.len())
        .iter()
        .take((0.5 * FS / 220.0) as usize)
        .map(|f| f.channels[m].group_delay_s.unwrap())
        .collect();
    assert!(window.len() >= 90);
    let mean = window.iter().sum::<f64>() / window.len() as f64;
    let std = (window.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / window.len() as f64).sqrt();
    assert!(std < 0.02 * period, "std {std} s, period {period} s");
}

#[test]
fn phase_map_is_periodic_with_fundamental() {
    let bank = full_bank();
    // f0 = 220.5 Hz, an integer period of 200 samples.
    let period = 200usize;
    let f0 = FS / period as f64;
    let len = 30_000;
    let x: Vec<f64> = (0..len)
        .map(|n| {
            (1..=20)
                .map(|h| (2.0 * PI * h as f64 * f0 * n as f64 / FS + 0.3 * h as f64).cos() / h as f64)
                .sum()
        })
        .collect();
    let hop = 5;
    let all = frames(&bank, &x, hop);
    let maps: Vec<Vec<Complex<f64>>> = steady(&bank, &all, len)
        .iter()
        .map(|f| {
            f.channels
                .iter()
                .map(|a| a.phase.map_or(Complex::new(0.0, 0.0), |p| Complex::from_polar(1.0, p)))
                .collect()
        })
        .collect();
    let correlation = |lag: usize| {
        let count = maps.len() - lag;
        let mut acc = Complex::new(0.0, 0.0);
        let mut norm = 0.0;
        for t in 0..count {
            for (a, b) in maps[t + lag].iter().zip(&maps[t]) {
                acc += a * b.conj();
                norm += a.norm() * b.norm();
            }
        }
        acc.norm() / norm
    };
    let at_period = correlation(period / hop);
    assert!(at_period >= 0.95, "{at_period}");
    assert!(at_period > correlation(period / hop / 2));
    assert!(at_period > correlation(period / hop / 4));
}

fn exponential_pair(freq_hz: f64, amplitude: f64, phase: f64) -> ChannelOutputPair<f64> {
    let step = 2.0 * PI * freq_hz / FS;
    ChannelOutputPair {
        channel_index: 0,
        y_n: Complex::from_polar(amplitude, phase),
        y_np1: Complex::from_polar(amplitude, phase + step),
        hop_time_s: 0.0,
        sample_index: 0,
        warmup: false,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn exact_for_complex_exponentials(
        freq in -22000.0f64..22000.0,
        amplitude in 1e-6f64..1e6,
        phase in -PI..PI,
    ) {
        let f = instantaneous_frequency(&exponential_pair(freq, amplitude, phase), FS).unwrap();
        prop_assert!((f - freq).abs() <= 1e-9 * freq.abs().max(1.0), "{f} vs {freq}");
    }
}

fn tone_in_noise(seed: u64) -> Vec<f64> {
    let noise: Vec<f64> = synth::white_noise(seed, 0.05, 6000);
    synth::cosine::<f64>(300.0, 0.5, 0.0, FS, 6000)
        .iter()
        .zip(&noise)
        .map(|(s, n)| s + n)
        .collect()
}

fn compare_scaled(gain: f64, seed: u64, tolerance: f64) -> Result<(), TestCaseError> {
    let bank = ChannelBank::design(150.0, 900.0, 6, 1.05, FS).unwrap();
    let x = tone_in_noise(seed);
    let scaled: Vec<f64> = x.iter().map(|v| v * gain).collect();
    let plain = frames(&bank, &x, 300);
    let louder = frames(&bank, &scaled, 300);
    for (a, b) in steady(&bank, &plain, x.len()).iter().zip(steady(&bank, &louder, x.len())) {
        for (p, q) in a.channels.iter().zip(&b.channels) {
            for (u, v) in [
                (p.norm_inst_freq, q.norm_inst_freq),
                (p.norm_group_delay, q.norm_group_delay),
            ] {
                let (u, v) = (u.unwrap(), v.unwrap());
                prop_assert!((u - v).abs() <= tolerance * u.abs().max(1.0), "{u} vs {v}");
            }
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    // Power-of-two gains scale every intermediate exactly.
    #[test]
    fn attributes_ignore_binary_gain(exponent in -20i32..20, seed in 0u64..100) {
        compare_scaled(2f64.powi(exponent), seed, 0.0)?;
    }

    // Other gains differ only by input rounding.
    #[test]
    fn attributes_ignore_global_gain(gain in 1e-3f64..1e3, seed in 0u64..100) {
        compare_scaled(gain, seed, 1e-10)?;
    }
}
