use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use phasevox::envelope::EnvelopeKind;
use phasevox::snr::{CalibrationOptions, CalibrationTable, DEFAULT_CALIBRATION_SEED};
use phasevox_cli::{self as cli, BenchRequest, CalibrateRequest, CliError, Settings};

#[derive(Parser)]
#[command(name = "phasevox", version, about = "Offline f0-candidate analysis tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Hop between analysis instants in ms (rounded down to whole samples).
    #[arg(long, default_value_t = 5.0)]
    hop_ms: f64,
    /// Lowest channel center in Hz.
    #[arg(long, default_value_t = 80.0)]
    f_lo: f64,
    /// Highest channel center in Hz.
    #[arg(long, default_value_t = 5000.0)]
    f_hi: f64,
    #[arg(long, default_value_t = 6)]
    per_octave: usize,
    /// Filter stretch factor.
    #[arg(long, default_value_t = 1.05)]
    c_mag: f64,
    /// Salience needed for a best candidate, in dB.
    #[arg(long, default_value_t = 15.0)]
    salience_db: f64,
}

impl Common {
    fn settings(&self) -> Settings {
        Settings {
            hop_ms: self.hop_ms,
            f_lo_hz: self.f_lo,
            f_hi_hz: self.f_hi,
            per_octave: self.per_octave,
            c_mag: self.c_mag,
            salience_db: self.salience_db,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write candidate trajectories of a WAV file as CSV.
    Analyze {
        input: PathBuf,
        /// Output CSV; stdout if absent.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// SNR calibration table to use instead of the built-in one.
        #[arg(long)]
        table: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Calibrate the variation-to-SNR table on synthetic tone-plus-noise.
    CalibrateSnr {
        /// six-term, hann, blackman, nuttall or kaiser:<beta>.
        #[arg(long, default_value = "six-term")]
        envelope: String,
        #[arg(short, long)]
        output: PathBuf,
        /// Measured curve CSV; defaults to the output path with .csv.
        #[arg(long)]
        curve: Option<PathBuf>,
        /// channel-band or full-band.
        #[arg(long, default_value = "channel-band")]
        noise_reference: String,
        /// Seconds of synthetic signal per grid point.
        #[arg(long, default_value_t = 4.0)]
        duration: f64,
        /// Grid spacing in dB from 0 to 80 dB.
        #[arg(long, default_value_t = 5.0)]
        grid_step: f64,
        #[arg(long, default_value_t = DEFAULT_CALIBRATION_SEED)]
        seed: u64,
        #[arg(long, default_value_t = 120.0)]
        tone_hz: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Measure throughput as multiples of real time.
    Bench {
        /// Seconds of audio per case.
        #[arg(long, default_value_t = 10.0)]
        seconds: f64,
        /// Also time evaluation at every sample.
        #[arg(long)]
        audio_rate: bool,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Write an analytic impulse response as t_s,real,imag CSV.
    DumpWindow {
        #[arg(long, default_value = "six-term")]
        kind: String,
        /// Carrier frequency in Hz.
        #[arg(long, default_value_t = 441.0)]
        fc: f64,
        /// Stretch factor.
        #[arg(long, default_value_t = 1.05)]
        c_mag: f64,
        /// Sample rate in Hz.
        #[arg(long, default_value_t = 44100.0)]
        fs: f64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

fn output(path: Option<&PathBuf>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Analyze { input, output: out, table, common } => {
            let table = table.map(CalibrationTable::load).transpose()?;
            let frames = cli::analyze_file(&input, &common.settings(), table)?;
            let mut out = output(out.as_ref())?;
            cli::write_trajectory(&frames, &mut out)?;
            out.flush()?;
        }
        Command::CalibrateSnr {
            envelope,
            output: table_path,
            curve,
            noise_reference,
            duration,
            grid_step,
            seed,
            tone_hz,
            common,
        } => {
            let sample_rate_hz = 44100.0;
            let settings = common.settings();
            let options = CalibrationOptions {
                tone_hz,
                duration_s: duration,
                hop_samples: settings.analyzer_config(sample_rate_hz)?.hop_samples,
                per_octave: common.per_octave,
                seed,
                noise_reference: cli::noise_reference(&noise_reference)?,
                snr_grid: cli::snr_grid(grid_step),
                ..CalibrationOptions::default()
            };
            let envelope: EnvelopeKind = envelope.parse()?;
            let request = CalibrateRequest { envelope, c_mag: common.c_mag, sample_rate_hz, options };
            let report = cli::calibrate(&request)?;
            report.table.save(&table_path)?;
            let curve_path = curve.unwrap_or_else(|| cli::curve_path(&table_path));
            std::fs::write(&curve_path, cli::curve_csv(&report.curve))?;
            for p in report.curve.iter().filter(|p| p.warning) {
                eprintln!(
                    "warning: {envelope} estimate at {} dB is off by {:+.2} dB",
                    p.snr_db, p.error_db
                );
            }
            println!(
                "wrote {} ({} knots) and {}",
                table_path.display(),
                report.table.knots().len(),
                curve_path.display()
            );
        }
        Command::Bench { seconds, audio_rate, csv, common } => {
            let request = BenchRequest { settings: common.settings(), audio_s: seconds, audio_rate };
            let results = cli::bench(&request)?;
            print!("{}", cli::bench_text(&results));
            if let Some(path) = csv {
                std::fs::write(path, cli::bench_csv(&results))?;
            }
        }
        Command::DumpWindow { kind, fc, c_mag, fs, output: out } => {
            let kind: EnvelopeKind = kind.parse()?;
            let mut out = output(out.as_ref())?;
            out.write_all(cli::dump_window(kind, fc, c_mag, fs)?.as_bytes())?;
            out.flush()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Cli::parse();
    match run(args.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
