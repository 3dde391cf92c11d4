use num_complex::Complex;
use phasevox::filterbank::{process_hop, ChannelBank};
use phasevox::synth;
use proptest::prelude::*;
use rustfft::FftPlanner;
use std::f64::consts::PI;

const FS: f64 = 44100.0;

fn small_bank() -> ChannelBank<f64> {
    ChannelBank::design(150.0, 600.0, 6, 1.05, FS).unwrap()
}

/// Full-rate convolution with zero padding, straight from the definition.
fn direct(h: &[Complex<f64>], x: &[f64], n: usize) -> Complex<f64> {
    let half = (h.len() / 2) as i64;
    let mut acc = Complex::new(0.0, 0.0);
    for (j, tap) in h.iter().enumerate() {
        let k = j as i64 - half;
        let idx = n as i64 - k;
        if idx >= 0 && (idx as usize) < x.len() {
            acc += tap * x[idx as usize];
        }
    }
    acc
}

#[test]
fn hop_outputs_equal_direct_convolution() {
    let bank = small_bank();
    let x: Vec<f64> = synth::white_noise(7, 0.3, FS as usize);
    let hops = process_hop(&bank, &x, 220).unwrap();
    assert_eq!(hops.len(), x.len().div_ceil(220));
    for hop in hops.iter().step_by(9) {
        for pair in &hop.pairs {
            let h = bank.channels()[pair.channel_index].response().samples();
            let y0 = direct(h, &x, hop.sample_index);
            let y1 = direct(h, &x, hop.sample_index + 1);
            let scale = y0.norm().max(1e-3);
            assert!((pair.y_n - y0).norm() <= 1e-10 * scale, "n {} ch {}", hop.sample_index, pair.channel_index);
            assert!((pair.y_np1 - y1).norm() <= 1e-10 * y1.norm().max(1e-3));
        }
    }
}

#[test]
fn impulse_reproduces_response() {
    let bank = small_bank();
    let n0 = 3000;
    let mut x = vec![0.0; 6000];
    x[n0] = 1.0;
    let hops = process_hop(&bank, &x, 1).unwrap();
    for channel in bank.channels() {
        let h = channel.response().samples();
        let half = channel.half_len();
        for (i, tap) in h.iter().enumerate() {
            let n = n0 + i - half;
            let y = hops[n].pairs[channel.index()].y_n;
            assert!((y - tap).norm() < 1e-15);
        }
    }
}

#[test]
fn complex_exponential_at_center_has_constant_magnitude() {
    let bank = small_bank();
    let m = 5;
    let fc = bank.center_hz(m);
    let len = 20_000;
    let re = synth::cosine::<f64>(fc, 1.0, 0.0, FS, len);
    let im = synth::cosine::<f64>(fc, 1.0, -PI / 2.0, FS, len);
    let y_re = process_hop(&bank, &re, 100).unwrap();
    let y_im = process_hop(&bank, &im, 100).unwrap();
    let settle = bank.channels()[m].response().len();
    let tail_guard = bank.max_half_len() + 2;
    let mags: Vec<f64> = y_re
        .iter()
        .zip(&y_im)
        .filter(|(h, _)| h.sample_index >= settle && h.sample_index + tail_guard < len)
        .map(|(a, b)| (a.pairs[m].y_n + Complex::<f64>::i() * b.pairs[m].y_n).norm())
        .collect();
    let first = mags[0];
    assert!(mags.iter().all(|v| (v - first).abs() < 1e-9 * first));
}

#[test]
fn warmup_flag_covers_first_response_length() {
    let bank = small_bank();
    let hops = process_hop(&bank, &vec![0.0; 5000], 50).unwrap();
    for hop in &hops {
        for pair in &hop.pairs {
            let len = bank.channels()[pair.channel_index].response().len();
            assert_eq!(pair.warmup, hop.sample_index < len);
        }
    }
}

/// Output energy at negative frequencies relative to the total, for input
/// concentrated in the passband region of channel `m`.
fn negative_frequency_share_db(bank: &ChannelBank<f64>, m: usize, x: &[f64]) -> f64 {
    let channel = &bank.channels()[m];
    let half = channel.half_len();
    let mut y: Vec<Complex<f64>> = (half..x.len() - half)
        .map(|n| channel.output_at(&x[n - half..=n + half]))
        .collect();
    let n = y.len();
    let window: Vec<f64> = (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect();
    y.iter_mut().zip(&window).for_each(|(v, w)| *v *= w);
    FftPlanner::new().plan_fft_forward(n).process(&mut y);
    let mut neg = 0.0;
    let mut total = 0.0;
    for (k, v) in y.iter().enumerate() {
        let p = v.norm_sqr();
        total += p;
        if k > n / 2 {
            neg += p;
        }
    }
    10.0 * (neg / total).log10()
}

#[test]
fn outputs_are_analytic() {
    let bank = ChannelBank::design(80.0, 5000.0, 6, 1.05, FS).unwrap();
    for m in [3, 12, 24] {
        let fc = bank.center_hz(m);
        // Components within a third of an octave around the center.
        let x: Vec<f64> = (0..16_384 * 2)
            .map(|i| {
                let t = i as f64 / FS;
                [-2.0, -1.0, 0.0, 1.0, 2.0]
                    .iter()
                    .map(|s| (2.0 * PI * fc * (s / 6.0f64).exp2() * t + s).cos())
                    .sum::<f64>()
            })
            .collect();
        let share = negative_frequency_share_db(&bank, m, &x);
        assert!(share <= -80.0, "channel {m}: {share:.1} dB");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn linearity(a in -3.0f64..3.0, b in -3.0f64..3.0, seed in 0u64..1000) {
        let bank = small_bank();
        let x1: Vec<f64> = synth::white_noise(seed, 0.5, 4000);
        let x2 = synth::cosine::<f64>(310.0, 0.7, 0.2, FS, 4000);
        let mix: Vec<f64> = x1.iter().zip(&x2).map(|(p, q)| a * p + b * q).collect();
        let h1 = process_hop(&bank, &x1, 137).unwrap();
        let h2 = process_hop(&bank, &x2, 137).unwrap();
        let hm = process_hop(&bank, &mix, 137).unwrap();
        for ((p, q), r) in h1.iter().zip(&h2).zip(&hm) {
            for ((u, v), w) in p.pairs.iter().zip(&q.pairs).zip(&r.pairs) {
                let expected = u.y_n * a + v.y_n * b;
                prop_assert!((w.y_n - expected).norm() <= 1e-9 * expected.norm().max(1.0));
            }
        }
    }
}
