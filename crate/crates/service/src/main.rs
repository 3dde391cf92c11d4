use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use phasevox_service::{Options, Service, Source};

/// Streams f0-candidate analysis frames over WebSocket.
#[derive(Parser)]
#[command(version)]
struct Args {
    /// Address to listen on.
    #[arg(long, default_value = "127.0.0.1:8765")]
    listen: String,
    /// WAV file, or `-` for mono f32le samples at 44.1 kHz on stdin.
    #[arg(long, default_value = "-")]
    input: String,
    /// Deliver file input at real-time pace.
    #[arg(long)]
    realtime: bool,
    /// Session config file (key = value).
    #[arg(long)]
    config: Option<PathBuf>,
}

#[tokio::main]
async fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let options = Options {
        listen: args.listen,
        input: Source::parse(&args.input, args.realtime),
        config_path: args.config,
    };
    let result = async { Service::bind(options).await?.serve().await }.await;
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::FAILURE
        }
    }
}
