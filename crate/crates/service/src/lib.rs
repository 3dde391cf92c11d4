//! Streaming service around the phasevox analyzer.
//!
//! One engine thread owns the analyzer and the session; an ingest thread
//! feeds it audio; a WebSocket server fans frames out to clients and routes
//! their control commands back. See [`protocol`] for the wire format.

pub mod config;
pub mod engine;
pub mod error;
pub mod ingest;
pub mod playback;
pub mod protocol;
pub mod ring;
pub mod server;
pub mod session;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::mpsc;
use std::thread;

use phasevox::pipeline::AnalyzerConfig;
use tokio::net::TcpListener;

pub use config::SessionConfig;
pub use engine::{Engine, EngineHandle};
pub use error::{Result, ServiceError};
pub use ingest::Source;
pub use session::Session;

use crate::playback::{LogPlayback, Playback};

#[derive(Clone, Debug)]
pub struct Options {
    pub listen: String,
    pub input: Source,
    /// Loaded if present and rewritten when the session changes.
    pub config_path: Option<PathBuf>,
}

/// A bound but not yet serving service.
pub struct Service {
    listener: TcpListener,
    engine: EngineHandle,
    start: Option<mpsc::Sender<()>>,
    threads: Vec<thread::JoinHandle<()>>,
}

impl Service {
    pub async fn bind(options: Options) -> Result<Self> {
        Self::bind_with(options, Box::new(LogPlayback)).await
    }

    pub async fn bind_with(options: Options, playback: Box<dyn Playback>) -> Result<Self> {
        let config = match &options.config_path {
            Some(path) if path.exists() => SessionConfig::load(path)?,
            _ => SessionConfig::default(),
        };
        let analyzer = analyzer_config(&config)?;
        let frame_rate = analyzer.sample_rate_hz / analyzer.hop_samples as f64;
        let (sample_rate, hop) = (analyzer.sample_rate_hz, analyzer.hop_samples);
        let session = Session::new(config, options.config_path.clone(), sample_rate, frame_rate, playback)?;
        let (engine, engine_thread) = engine::spawn(Engine::new(analyzer, session)?);

        let (start_tx, start_rx) = mpsc::channel();
        let ingest_thread = ingest::spawn(options.input.clone(), hop, sample_rate, engine.input(), start_rx)?;
        // Live input records from the start; a file waits for its first reader.
        let start = match options.input {
            Source::Stdin => {
                let _ = start_tx.send(());
                None
            }
            Source::File { .. } => Some(start_tx),
        };
        let listener = TcpListener::bind(&options.listen).await?;
        Ok(Self { listener, engine, start, threads: vec![engine_thread, ingest_thread] })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.listener.local_addr()?)
    }

    pub fn engine(&self) -> &EngineHandle {
        &self.engine
    }

    /// Serves until QUIT. The ingest thread is left to finish on its own.
    pub async fn serve(mut self) -> Result<()> {
        let engine_thread = self.threads.remove(0);
        server::serve(self.listener, self.engine, self.start).await?;
        let _ = tokio::task::spawn_blocking(move || engine_thread.join()).await;
        Ok(())
    }
}

/// Analyzer settings implied by a session config.
pub fn analyzer_config(config: &SessionConfig) -> Result<AnalyzerConfig> {
    let mut analyzer = AnalyzerConfig {
        salience_threshold_db: config.salience_threshold_db,
        ..AnalyzerConfig::default()
    };
    analyzer.hop_samples = AnalyzerConfig::hop_from_ms(config.hop_ms, analyzer.sample_rate_hz)?;
    Ok(analyzer)
}
