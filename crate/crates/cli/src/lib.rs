//! Batch front end: trajectory CSVs, SNR calibration tables, window dumps
//! and throughput benchmarks.

use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use phasevox::envelope::{self, EnvelopeKind, DEFAULT_STRETCH};
use phasevox::filterbank::{process_hop, ChannelBank};
use phasevox::phase::assemble_attribute_frame;
use phasevox::pipeline::{self, AnalysisFrame, AnalyzerConfig};
use phasevox::snr::{self, CalibrationOptions, CalibrationTable, NoiseReference, SnrTracker, SNR_CEILING_DB};
use phasevox::{synth, wav, Real};
use thiserror::Error;

/// Largest tolerated estimation error before a curve point is flagged.
pub const ACCURACY_DB: f64 = 3.0;
/// Pass floors for the benchmark.
pub const SINGLE_CHANNEL_FLOOR: f64 = 50.0;
pub const FULL_BANK_FLOOR: f64 = 1.0;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Analysis(#[from] phasevox::Error),
    #[error("{}: {source}", path.display())]
    Read { path: PathBuf, source: phasevox::Error },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl CliError {
    /// 2 for unreadable or malformed input, 3 for calibration failures.
    pub fn exit_code(&self) -> u8 {
        use phasevox::Error as E;
        match self {
            Self::Analysis(E::NonMonotone(_) | E::InsufficientFrames { .. } | E::TableMismatch(_)) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

/// Analysis settings shared by the subcommands.
#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    pub hop_ms: f64,
    pub f_lo_hz: f64,
    pub f_hi_hz: f64,
    pub per_octave: usize,
    pub c_mag: f64,
    pub salience_db: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            hop_ms: 5.0,
            f_lo_hz: pipeline::DEFAULT_F_LO_HZ,
            f_hi_hz: pipeline::DEFAULT_F_HI_HZ,
            per_octave: pipeline::DEFAULT_PER_OCTAVE,
            c_mag: DEFAULT_STRETCH,
            salience_db: phasevox::f0::DEFAULT_SALIENCE_THRESHOLD_DB,
        }
    }
}

impl Settings {
    pub fn analyzer_config(&self, sample_rate_hz: f64) -> Result<AnalyzerConfig> {
        Ok(AnalyzerConfig {
            sample_rate_hz,
            hop_samples: AnalyzerConfig::hop_from_ms(self.hop_ms, sample_rate_hz)?,
            f_lo_hz: self.f_lo_hz,
            f_hi_hz: self.f_hi_hz,
            per_octave: self.per_octave,
            stretch: self.c_mag,
            salience_threshold_db: self.salience_db,
            ..AnalyzerConfig::default()
        })
    }
}

// ---- analyze ----

pub const TRAJECTORY_HEADER: &str = "t_s,f1,snr1,f2,snr2,f3,snr3,f4,snr4,salience,best";

/// Frames for a WAV file, converted to the work rate first.
pub fn analyze_file(path: &Path, settings: &Settings, table: Option<CalibrationTable>) -> Result<Vec<AnalysisFrame>> {
    let audio = wav::load_resampled(path, wav::WORK_SAMPLE_RATE_HZ)
        .map_err(|source| CliError::Read { path: path.to_path_buf(), source })?;
    let mut config = settings.analyzer_config(audio.sample_rate_hz as f64)?;
    config.snr_table = table;
    Ok(pipeline::analyze_signal::<f64>(config, &audio.samples)?)
}

/// One CSV line per frame; absent values are empty fields.
pub fn trajectory_row(frame: &AnalysisFrame) -> String {
    let mut row = format!("{}", frame.t_ms / 1000.0);
    for i in 0..4 {
        match frame.candidates.get(i) {
            Some(c) => write!(row, ",{},{}", c.freq_hz, c.snr_db),
            None => write!(row, ",,"),
        }
        .unwrap();
    }
    write!(row, ",{},", frame.salience_db).unwrap();
    if let Some(best) = &frame.best {
        write!(row, "{}", best.freq_hz).unwrap();
    }
    row
}

pub fn write_trajectory(frames: &[AnalysisFrame], out: &mut impl Write) -> io::Result<()> {
    writeln!(out, "{TRAJECTORY_HEADER}")?;
    for frame in frames {
        writeln!(out, "{}", trajectory_row(frame))?;
    }
    Ok(())
}

/// A parsed trajectory line.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub t_s: f64,
    pub candidates: Vec<(f64, f64)>,
    pub salience_db: f64,
    pub best_freq_hz: Option<f64>,
}

pub fn parse_trajectory(text: &str) -> std::result::Result<Vec<TrajectoryRecord>, String> {
    let mut lines = text.lines();
    if lines.next() != Some(TRAJECTORY_HEADER) {
        return Err("missing trajectory header".into());
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 11 {
                return Err(format!("line {}: expected 11 fields", i + 2));
            }
            let number = |s: &str| s.parse::<f64>().map_err(|e| format!("line {}: {e}", i + 2));
            let optional = |s: &str| if s.is_empty() { Ok(None) } else { number(s).map(Some) };
            let mut candidates = Vec::new();
            for pair in fields[1..9].chunks(2) {
                if let (Some(f), Some(s)) = (optional(pair[0])?, optional(pair[1])?) {
                    candidates.push((f, s));
                }
            }
            Ok(TrajectoryRecord {
                t_s: number(fields[0])?,
                candidates,
                salience_db: number(fields[9])?,
                best_freq_hz: optional(fields[10])?,
            })
        })
        .collect()
}

// ---- calibrate-snr ----

#[derive(Clone, Debug, PartialEq)]
pub struct CalibrateRequest {
    pub envelope: EnvelopeKind,
    pub c_mag: f64,
    pub sample_rate_hz: f64,
    pub options: CalibrationOptions,
}

/// One row of the measured curve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub snr_db: f64,
    pub variation: f64,
    pub saturated: bool,
    /// Estimate for a mixture with a seed not used by the fit.
    pub estimate_db: f64,
    pub error_db: f64,
    pub warning: bool,
}

pub struct CalibrationReport {
    pub table: CalibrationTable,
    pub curve: Vec<CurvePoint>,
}

impl CalibrationReport {
    pub fn warnings(&self) -> usize {
        self.curve.iter().filter(|p| p.warning).count()
    }
}

/// Seeds of the check mixtures are offset from the fit seeds by this much.
const CHECK_SEED_OFFSET: u64 = 1 << 32;

pub fn calibrate(request: &CalibrateRequest) -> Result<CalibrationReport> {
    let options = &request.options;
    let calibration =
        snr::calibrate::<f64>(request.envelope, request.c_mag, request.sample_rate_hz, options)?;
    let table = calibration.table;
    let curve = calibration
        .measured
        .iter()
        .enumerate()
        .map(|(i, point)| {
            let seed = options.seed_for(i).wrapping_add(CHECK_SEED_OFFSET);
            let fresh = snr::measure_variation::<f64>(
                request.envelope,
                request.c_mag,
                request.sample_rate_hz,
                point.snr_db,
                seed,
                options,
            )?;
            let estimate_db = table.estimate(fresh);
            let error_db = estimate_db - point.snr_db;
            let in_range = (10.0..=SNR_CEILING_DB).contains(&point.snr_db);
            Ok(CurvePoint {
                snr_db: point.snr_db,
                variation: point.variation,
                saturated: point.saturated,
                estimate_db,
                error_db,
                warning: in_range && error_db.abs() > ACCURACY_DB,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CalibrationReport { table, curve })
}

pub const CURVE_HEADER: &str = "snr_db,variation,saturated,estimate_db,error_db,warning";

pub fn curve_csv(curve: &[CurvePoint]) -> String {
    let mut out = format!("{CURVE_HEADER}\n");
    for p in curve {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            p.snr_db, p.variation, p.saturated as u8, p.estimate_db, p.error_db, p.warning as u8
        )
        .unwrap();
    }
    out
}

/// `table.cal` becomes `table.csv`.
pub fn curve_path(table_path: &Path) -> PathBuf {
    table_path.with_extension("csv")
}

/// Evenly spaced grid from 0 to the ceiling.
pub fn snr_grid(step_db: f64) -> Vec<f64> {
    let count = (SNR_CEILING_DB / step_db).round() as usize;
    (0..=count).map(|i| i as f64 * step_db).collect()
}

pub fn noise_reference(name: &str) -> Result<NoiseReference> {
    Ok(name.parse()?)
}

// ---- dump-window ----

/// `t_s,real,imag` rows of the analytic impulse response.
pub fn dump_window(kind: EnvelopeKind, carrier_hz: f64, c_mag: f64, sample_rate_hz: f64) -> Result<String> {
    let response = envelope::analytic_impulse_response_with(kind, carrier_hz, c_mag, sample_rate_hz)?;
    let mut out = String::from("t_s,real,imag\n");
    for (i, z) in response.samples().iter().enumerate() {
        writeln!(out, "{},{},{}", response.time_s(i), z.re, z.im).unwrap();
    }
    Ok(out)
}

// ---- bench ----

#[derive(Clone, Debug, PartialEq)]
pub struct BenchResult {
    pub case: String,
    pub channels: usize,
    pub hop_samples: usize,
    pub audio_s: f64,
    pub elapsed_s: f64,
    /// Pass floor in multiples of real time; informational cases have none.
    pub floor: Option<f64>,
}

impl BenchResult {
    pub fn x_realtime(&self) -> f64 {
        self.audio_s / self.elapsed_s
    }

    pub fn passed(&self) -> Option<bool> {
        self.floor.map(|floor| self.x_realtime() >= floor)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRequest {
    pub settings: Settings,
    pub audio_s: f64,
    /// Also time audio-rate evaluation (hop of one sample).
    pub audio_rate: bool,
}

fn bench_signal(seconds: f64) -> Vec<f64> {
    let n = (seconds * 44100.0) as usize;
    let tone = synth::cosine::<f64>(220.0, 0.5, 0.0, 44100.0, n);
    let noise = synth::white_noise::<f64>(7, 0.01, n);
    tone.iter().zip(&noise).map(|(a, b)| a + b).collect()
}

/// Filter outputs, attributes and SNR variation on `bank`, without
/// candidate search or metering.
fn attribute_loop<T: Real>(bank: &ChannelBank<T>, signal: &[T], hop: usize) -> Result<f64> {
    let started = Instant::now();
    let mut tracker = SnrTracker::<T>::new(bank.len(), snr::DEFAULT_WINDOW_FRAMES);
    let mut sink = 0usize;
    for outputs in process_hop(bank, signal, hop)? {
        let frame = assemble_attribute_frame(bank, &outputs.pairs);
        sink += tracker.push(&frame).iter().flatten().count();
    }
    std::hint::black_box(sink);
    Ok(started.elapsed().as_secs_f64())
}

pub fn bench(request: &BenchRequest) -> Result<Vec<BenchResult>> {
    let settings = &request.settings;
    let fs = 44100.0;
    let config = settings.analyzer_config(fs)?;
    let hop = config.hop_samples;
    let signal = bench_signal(request.audio_s);
    let mut results = Vec::new();

    // The lowest channel has the longest filter; its upper neighbour is
    // needed for group delay, so the pair is timed together.
    let upper = settings.f_lo_hz * (1.0 / settings.per_octave as f64).exp2();
    let pair = ChannelBank::<f64>::from_centers(EnvelopeKind::SixTerm, &[settings.f_lo_hz, upper], settings.per_octave, settings.c_mag, fs)?;
    results.push(BenchResult {
        case: "single channel".into(),
        channels: 1,
        hop_samples: hop,
        audio_s: request.audio_s,
        elapsed_s: attribute_loop(&pair, &signal, hop)?,
        floor: Some(SINGLE_CHANNEL_FLOOR),
    });

    let bank = ChannelBank::<f64>::design(settings.f_lo_hz, settings.f_hi_hz, settings.per_octave, settings.c_mag, fs)?;
    let started = Instant::now();
    std::hint::black_box(pipeline::analyze_signal::<f64>(config, &signal)?);
    let elapsed_s = started.elapsed().as_secs_f64();
    results.push(BenchResult {
        case: "full pipeline".into(),
        channels: bank.len(),
        hop_samples: hop,
        audio_s: request.audio_s,
        elapsed_s,
        floor: Some(FULL_BANK_FLOOR),
    });

    let bank32 = ChannelBank::<f32>::design(
        settings.f_lo_hz as f32,
        settings.f_hi_hz as f32,
        settings.per_octave,
        settings.c_mag as f32,
        fs as f32,
    )?;
    let signal32: Vec<f32> = signal.iter().map(|&x| x as f32).collect();
    results.push(BenchResult {
        case: "full bank attributes f32".into(),
        channels: bank32.len(),
        hop_samples: hop,
        audio_s: request.audio_s,
        elapsed_s: attribute_loop(&bank32, &signal32, hop)?,
        floor: None,
    });

    if request.audio_rate {
        let seconds = request.audio_s.min(0.25);
        let short = &signal[..(seconds * fs) as usize];
        results.push(BenchResult {
            case: "full bank attributes, audio rate".into(),
            channels: bank.len(),
            hop_samples: 1,
            audio_s: seconds,
            elapsed_s: attribute_loop(&bank, short, 1)?,
            floor: None,
        });
    }
    Ok(results)
}

pub fn machine_info() -> String {
    let cpu = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|info| {
            info.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split_once(':'))
                .map(|(_, v)| v.trim().to_string())
        })
        .unwrap_or_else(|| "unknown cpu".into());
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    format!("{cpu}, {threads} threads, {}-{}", std::env::consts::OS, std::env::consts::ARCH)
}

pub fn bench_text(results: &[BenchResult]) -> String {
    let mut out = format!("machine: {}\n", machine_info());
    for r in results {
        let verdict = match r.passed() {
            Some(true) => format!("PASS (floor {}x)", r.floor.unwrap()),
            Some(false) => format!("FAIL (floor {}x)", r.floor.unwrap()),
            None => "info".into(),
        };
        writeln!(
            out,
            "{:<34} {:>3} ch  hop {:>3}  {:>9.1}x real time  {verdict}",
            r.case,
            r.channels,
            r.hop_samples,
            r.x_realtime()
        )
        .unwrap();
    }
    out
}

pub const BENCH_HEADER: &str = "case,channels,hop_samples,audio_s,elapsed_s,x_realtime,floor,pass";

pub fn bench_csv(results: &[BenchResult]) -> String {
    let mut out = format!("{BENCH_HEADER}\n");
    for r in results {
        let floor = r.floor.map(|f| f.to_string()).unwrap_or_default();
        let pass = r.passed().map(|p| (p as u8).to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{floor},{pass}",
            r.case,
            r.channels,
            r.hop_samples,
            r.audio_s,
            r.elapsed_s,
            r.x_realtime()
        )
        .unwrap();
    }
    out
}
