//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::f64::consts::PI;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use futures_util::{SinkExt, StreamExt};
use num_complex::Complex;
use phasevox::envelope::{analytic_impulse_response, EnvelopeKind, SIX_TERM_COEFFICIENTS};
use phasevox::filterbank::{process_hop, ChannelBank};
use phasevox::level::{c_weight, CWeighting};
use phasevox::phase::{assemble_attribute_frame, AttributeFrame};
use phasevox::pipeline::{analyze_signal, AnalysisFrame, AnalyzerConfig};
use phasevox::snr::{calibrate, measure_variation, CalibrationOptions, CalibrationTable, NoiseReference};
use phasevox::synth;
use phasevox::wav::{self, WORK_SAMPLE_RATE_HZ};
use phasevox_cli::{bench, parse_trajectory, BenchRequest, Settings, TrajectoryRecord};
use phasevox_service::protocol::ServerMessage;
use phasevox_service::session::save_work;
use phasevox_service::{Options, Service, Source};
use tokio_tungstenite::tungstenite::Message;

const FS: f64 = 44100.0;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn bank() -> ChannelBank<f64> {
    ChannelBank::design(80.0, 5000.0, 6, 1.05, FS).unwrap()
}

fn dtft(samples: &[Complex<f64>], freq_hz: f64) -> Complex<f64> {
    let half = (samples.len() / 2) as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, h)| h * Complex::from_polar(1.0, -2.0 * PI * freq_hz * (i as f64 - half) / FS))
        .sum()
}

fn analyze(x: &[f64]) -> Vec<AnalysisFrame> {
    analyze_signal::<f64>(AnalyzerConfig::default(), x).unwrap()
}

/// Post-warm-up frames whose widest filter stays inside the signal.
fn interior(frames: &[AnalysisFrame], len: usize) -> Vec<&AnalysisFrame> {
    let guard = bank().max_half_len() as u64 + 2;
    frames
        .iter()
        .filter(|f| !f.warmup && f.sample_index + guard < len as u64)
        .collect()
}

fn envelope_identities() -> Outcome {
    let a = SIX_TERM_COEFFICIENTS;
    let sum: f64 = a.iter().sum();
    let alternating: f64 = a.iter().enumerate().map(|(k, v)| if k % 2 == 0 { *v } else { -v }).sum();
    let h = analytic_impulse_response::<f64>(441.0, 1.05, FS).unwrap();
    let center = h.center();
    let mut worst_rejection = f64::INFINITY;
    for c in bank().channels() {
        let samples = c.response().samples();
        let fc = c.center_hz();
        let ratio = dtft(samples, -fc).norm() / dtft(samples, fc).norm();
        worst_rejection = worst_rejection.min(-20.0 * ratio.log10());
    }
    let ok = (sum - 1.0).abs() <= 1e-9
        && alternating.abs() <= 1e-9
        && (center - Complex::new(1.0, 0.0)).norm() <= 1e-12
        && worst_rejection >= 80.0;
    check(
        ok,
        format!(
            "sum-1 {:.1e}, alternating {:.1e}, center {:.3}, worst negative-frequency rejection {worst_rejection:.1} dB",
            sum - 1.0,
            alternating,
            center
        ),
    )
}

fn worst_error(table: &CalibrationTable, kind: EnvelopeKind, options: &CalibrationOptions) -> f64 {
    (1..=8)
        .map(|i| {
            let snr = 10.0 * i as f64;
            let v = measure_variation::<f64>(kind, 1.05, FS, snr, 0xacce_0000 + i, options).unwrap();
            (table.estimate(v) - snr).abs()
        })
        .fold(0.0, f64::max)
}

fn snr_calibration() -> Outcome {
    let options = CalibrationOptions { noise_reference: NoiseReference::FullBand, ..CalibrationOptions::default() };
    let six = calibrate::<f64>(EnvelopeKind::SixTerm, 1.05, FS, &options).map_err(|e| e.to_string())?;
    let six_worst = worst_error(&six.table, EnvelopeKind::SixTerm, &options);
    let hann = calibrate::<f64>(EnvelopeKind::Hann, 1.05, FS, &options).map_err(|e| e.to_string())?;
    let hann_worst = worst_error(&hann.table, EnvelopeKind::Hann, &options);
    let shipped = CalibrationTable::shipped_six_term();
    let shipped_options = CalibrationOptions { noise_reference: shipped.noise_reference, ..CalibrationOptions::default() };
    let shipped_worst = worst_error(&shipped, EnvelopeKind::SixTerm, &shipped_options);
    check(
        six_worst <= 3.0 && shipped_worst <= 3.0 && hann_worst > 3.0,
        format!(
            "six-term worst {six_worst:.2} dB (shipped channel-band table {shipped_worst:.2} dB), hann worst {hann_worst:.2} dB"
        ),
    )
}

fn pitch_accuracy() -> Outcome {
    let mut details = Vec::new();
    let mut ok = true;
    for f in [110.0, 220.0, 440.0, 880.0] {
        let x = synth::cosine::<f64>(f, 0.5, 0.0, FS, (1.5 * FS) as usize);
        let frames = analyze(&x);
        let after: Vec<_> = frames.iter().filter(|fr| !fr.warmup).collect();
        let good = after
            .iter()
            .filter(|fr| fr.best.as_ref().is_some_and(|b| (b.freq_hz / f - 1.0).abs() <= 0.005))
            .count();
        let share = good as f64 / after.len() as f64;
        ok &= share >= 0.95;
        details.push(format!("{f} Hz {:.1}%", 100.0 * share));
    }
    let x = synth::cosine::<f64>(330.0, 0.5, 0.2, FS, FS as usize);
    let base = analyze(&x);
    let mut worst_shift: f64 = 0.0;
    for gain in [0.1, 10.0] {
        let scaled: Vec<f64> = x.iter().map(|v| v * gain).collect();
        for (a, b) in base.iter().zip(&analyze(&scaled)) {
            if a.candidates.len() != b.candidates.len() {
                ok = false;
                continue;
            }
            for (p, q) in a.candidates.iter().zip(&b.candidates) {
                worst_shift = worst_shift.max((p.freq_hz / q.freq_hz - 1.0).abs());
            }
        }
    }
    ok &= worst_shift < 1e-4;
    details.push(format!("gain shift {:.1e}%", 100.0 * worst_shift));
    check(ok, details.join(", "))
}

fn candidate_contract() -> Outcome {
    let len = (1.0 * FS) as usize;
    let x: Vec<f64> = (0..len)
        .map(|n| {
            let t = n as f64 / FS;
            0.4 * (2.0 * PI * 200.0 * t).sin() + 0.4 * (2.0 * PI * 320.0 * t + 0.7).sin()
        })
        .collect();
    let frames = analyze(&x);
    let steady = interior(&frames, len);
    let near = |f: &AnalysisFrame, target: f64| f.candidates.iter().any(|c| (c.freq_hz / target - 1.0).abs() <= 0.01);
    let both = steady.iter().filter(|f| near(f, 200.0) && near(f, 320.0)).count();
    let low = steady.iter().filter(|f| near(f, 200.0)).count();
    let high = steady.iter().filter(|f| near(f, 320.0)).count();

    let noise: Vec<f64> = synth::white_noise(11, 0.05, len);
    let busy: Vec<f64> = synth::chirp::<f64>(100.0, 2000.0, 0.3, FS, len)
        .iter()
        .zip(&noise)
        .enumerate()
        .map(|(n, (c, e))| c + e + (1..=8).map(|h| 0.1 * (2.0 * PI * 150.0 * h as f64 * n as f64 / FS).cos()).sum::<f64>())
        .collect();
    let most = analyze(&busy).iter().chain(&frames).map(|f| f.candidates.len()).max().unwrap_or(0);
    let silent = analyze(&vec![0.0; len / 2]).iter().all(|f| f.candidates.is_empty() && f.best.is_none());

    check(
        both == steady.len() && most <= 4 && silent,
        format!(
            "200+320 Hz: both within 1% on {both}/{} frames (200 Hz on {low}, 320 Hz on {high}); max candidates {most}; silence empty {silent}",
            steady.len()
        ),
    )
}

fn attribute_frames(bank: &ChannelBank<f64>, x: &[f64], hop: usize) -> Vec<AttributeFrame<f64>> {
    process_hop(bank, x, hop)
        .unwrap()
        .iter()
        .map(|h| assemble_attribute_frame(bank, &h.pairs))
        .collect()
}

fn group_delay() -> Outcome {
    let bank = bank();
    let n0 = 20_000usize;
    let mut x = vec![0.0; 40_000];
    x[n0] = 1.0;
    let frames = attribute_frames(&bank, &x, 7);
    let (mut checked, mut worst, mut missing) = (0usize, 0.0f64, 0usize);
    for k in 0..bank.len() - 1 {
        let period = FS / bank.center_hz(k);
        let reach = bank.channels()[k + 1].half_len() as i64;
        for frame in &frames {
            let offset = frame.sample_index as i64 - n0 as i64;
            if offset.abs() >= reach {
                continue;
            }
            match frame.channels[k].group_delay_s {
                Some(tau) => {
                    let pointed = frame.sample_index as f64 + tau * FS;
                    worst = worst.max((pointed - n0 as f64).abs() / period);
                    checked += 1;
                }
                // Envelope tails fall under the validity floor.
                None if offset.abs() as f64 > 0.9 * reach as f64 => {}
                None => missing += 1,
            }
        }
    }

    let tone = synth::cosine::<f64>(220.0, 0.5, 0.0, FS, (1.5 * FS) as usize);
    let frames = attribute_frames(&bank, &tone, 220);
    let m = bank.nearest_channel(220.0);
    let guard = 2 * bank.max_half_len() + 2;
    let delays: Vec<f64> = frames
        .iter()
        .filter(|f| !f.warmup && f.sample_index + guard < tone.len())
        .take((0.5 * FS / 220.0) as usize)
        .filter_map(|f| f.channels[m].group_delay_s)
        .collect();
    let mean = delays.iter().sum::<f64>() / delays.len() as f64;
    let std = (delays.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / delays.len() as f64).sqrt();
    let relative_std = std * bank.center_hz(m);
    check(
        missing == 0 && worst <= 0.05 && relative_std < 0.02 && delays.len() >= 90,
        format!(
            "impulse: worst {:.2}% of period over {checked} readings; tone: std {:.3}% of period over {} frames",
            100.0 * worst,
            100.0 * relative_std,
            delays.len()
        ),
    )
}

fn throughput() -> Outcome {
    let results = bench(&BenchRequest { settings: Settings::default(), audio_s: 10.0, audio_rate: false })
        .map_err(|e| e.to_string())?;
    let graded: Vec<_> = results.iter().filter(|r| r.floor.is_some()).collect();
    let ok = graded.len() == 2 && graded.iter().all(|r| r.passed() == Some(true));
    let detail = graded
        .iter()
        .map(|r| format!("{} {:.1}x (floor {}x)", r.case, r.x_realtime(), r.floor.unwrap()))
        .collect::<Vec<_>>()
        .join(", ");
    check(ok, detail)
}

fn le16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn le32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

fn wav_contract() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let n = 10 * 44100;
    let samples: Vec<f64> = synth::white_noise::<f64>(5, 0.3, n).iter().map(|v| v.clamp(-1.0, 1.0)).collect();
    let path = save_work(dir.path(), &samples).map_err(|e| e.to_string())?;
    let bytes = std::fs::read(&path).unwrap();
    let expected_len = 44 + 3 * n;
    let header_ok = &bytes[0..4] == b"RIFF"
        && le32(&bytes, 4) as usize == bytes.len() - 8
        && &bytes[8..16] == b"WAVEfmt "
        && le32(&bytes, 16) == 16
        && le16(&bytes, 20) == 1
        && le16(&bytes, 22) == 1
        && le32(&bytes, 24) == 44100
        && le32(&bytes, 28) == 44100 * 3
        && le16(&bytes, 32) == 3
        && le16(&bytes, 34) == 24
        && &bytes[36..40] == b"data"
        && le32(&bytes, 40) as usize == 3 * n;
    // Independent decode of the data chunk.
    let decoded: Vec<i32> = bytes[44..].chunks_exact(3).map(|b| i32::from_le_bytes([0, b[0], b[1], b[2]]) >> 8).collect();
    let read_back = wav::read_wav(&path).map_err(|e| e.to_string())?;
    let expected: Vec<i32> = samples.iter().map(|&s| wav::quantize_24(s)).collect();
    let exact = decoded == expected
        && read_back.samples.len() == n
        && read_back.samples.iter().zip(&expected).all(|(s, &q)| *s == wav::dequantize_24(q));
    let second = save_work(dir.path(), &samples[..10]).map_err(|e| e.to_string())?;
    check(
        header_ok && exact && bytes.len() == expected_len && second != path,
        format!(
            "{} bytes (expected {expected_len}), header {header_ok}, sample-exact {exact}",
            bytes.len()
        ),
    )
}

/// Analog C-weighting magnitude in dB, normalized at 1 kHz.
fn analog_c_db(f: f64) -> f64 {
    let (f1, f4) = (20.598997f64, 12194.217f64);
    let raw = |f: f64| {
        let f2 = f * f;
        f4 * f4 * f2 / ((f2 + f1 * f1) * (f2 + f4 * f4))
    };
    20.0 * (raw(f) / raw(1000.0)).log10()
}

fn c_weighting() -> Outcome {
    let filter = CWeighting::<f64>::new(FS).map_err(|e| e.to_string())?;
    let rms = |x: &[f64]| (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt();
    let mut details = Vec::new();
    let mut ok = true;
    for (f, target, tolerance) in [(1000.0, 0.0, 0.1), (31.5, -3.0, 0.3), (8000.0, -3.0, 0.3)] {
        let oracle = analog_c_db(f);
        let response = filter.magnitude_db(f);
        let x = synth::cosine::<f64>(f, 0.5, 0.0, FS, (3.0 * FS) as usize);
        let y = c_weight(&x, FS).map_err(|e| e.to_string())?;
        let settled = FS as usize;
        let measured = 20.0 * (rms(&y[settled..]) / rms(&x[settled..])).log10();
        ok &= (oracle - target).abs() <= tolerance
            && (response - oracle).abs() <= tolerance
            && (measured - oracle).abs() <= tolerance;
        details.push(format!("{f} Hz: analog {oracle:.2}, filter {response:.2}, measured {measured:.2} dB"));
    }
    check(ok, details.join("; "))
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9
}

fn same_record(cli: &TrajectoryRecord, frame: &AnalysisFrame) -> bool {
    close(cli.t_s, frame.t_ms / 1000.0)
        && close(cli.salience_db, frame.salience_db)
        && cli.candidates.len() == frame.candidates.len()
        && cli
            .candidates
            .iter()
            .zip(&frame.candidates)
            .all(|(&(f, s), c)| close(f, c.freq_hz) && close(s, c.snr_db))
        && match (cli.best_freq_hz, &frame.best) {
            (Some(f), Some(b)) => close(f, b.freq_hz),
            (None, None) => true,
            _ => false,
        }
}

async fn service_frames(path: &Path) -> Result<Vec<AnalysisFrame>, String> {
    let input = Source::File { path: path.to_path_buf(), realtime: false };
    let options = Options { listen: "127.0.0.1:0".into(), input, config_path: None };
    let service = Service::bind(options).await.map_err(|e| e.to_string())?;
    let addr = service.local_addr().map_err(|e| e.to_string())?;
    tokio::spawn(service.serve());
    let (mut socket, _) = tokio_tungstenite::connect_async(format!("ws://{addr}")).await.map_err(|e| e.to_string())?;
    socket
        .send(Message::text(r#"{"type":"subscribe"}"#))
        .await
        .map_err(|e| e.to_string())?;
    let mut frames = Vec::new();
    loop {
        let message = tokio::time::timeout(Duration::from_secs(60), socket.next())
            .await
            .map_err(|_| "timed out".to_string())?
            .ok_or("socket closed")?
            .map_err(|e| e.to_string())?;
        let Message::Text(text) = message else { continue };
        match serde_json::from_str(text.as_str()).map_err(|e| e.to_string())? {
            ServerMessage::Frame(frame) => frames.push(frame),
            ServerMessage::EndOfStream { .. } => break,
            _ => {}
        }
    }
    let _ = socket.send(Message::text(r#"{"type":"control","command":"QUIT"}"#)).await;
    Ok(frames)
}

fn oracle_equivalence() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let len = (1.5 * FS) as usize;
    let noise: Vec<f64> = synth::white_noise(21, 0.02, len);
    let x: Vec<f64> = (0..len)
        .map(|n| {
            let t = n as f64 / FS;
            let f0 = 180.0 + 20.0 * (2.0 * PI * 3.0 * t).sin();
            (1..=5).map(|h| 0.3 / h as f64 * (2.0 * PI * f0 * h as f64 * t).sin()).sum::<f64>() + noise[n]
        })
        .collect();
    let path = dir.path().join("voice.wav");
    wav::write_wav_24(&path, &x, WORK_SAMPLE_RATE_HZ).map_err(|e| e.to_string())?;

    let run = || {
        Command::new(env!("CARGO_BIN_EXE_phasevox"))
            .args(["analyze", path.to_str().unwrap()])
            .output()
            .map_err(|e| e.to_string())
    };
    let (first, second) = (run()?, run()?);
    if !first.status.success() {
        return Err(String::from_utf8_lossy(&first.stderr).into_owned());
    }
    let identical = first.stdout == second.stdout;
    let records = parse_trajectory(&String::from_utf8_lossy(&first.stdout))?;

    let runtime = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    let frames = runtime.block_on(service_frames(&path))?;
    let matching = records.iter().zip(&frames).filter(|(r, f)| same_record(r, f)).count();
    check(
        identical && records.len() == frames.len() && matching == records.len(),
        format!(
            "{matching}/{} records match {} service frames; repeated runs identical {identical}",
            records.len(),
            frames.len()
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("envelope identities", envelope_identities),
        ("SNR calibration", snr_calibration),
        ("pitch accuracy", pitch_accuracy),
        ("candidate contract", candidate_contract),
        ("group delay", group_delay),
        ("throughput", throughput),
        ("WAV contract", wav_contract),
        ("C-weighting", c_weighting),
        ("CLI/service equivalence", oracle_equivalence),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let outcome = run();
        let elapsed = started.elapsed().as_secs_f64();
        let (verdict, detail) = match &outcome {
            Ok(detail) => ("PASS", detail),
            Err(detail) => ("FAIL", detail),
        };
        println!("criterion {} {name}: {verdict} ({detail}) [{elapsed:.1} s]", i + 1);
        failed += outcome.is_err() as usize;
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
