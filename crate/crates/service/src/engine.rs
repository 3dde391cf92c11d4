//! The single state owner: analyzer plus session, driven from one thread.
//!
//! Audio blocks and control commands arrive on one ordered channel, so a
//! command always applies between two blocks. Results fan out on a
//! broadcast channel whose receivers drop their oldest events when they lag.

use std::sync::mpsc;
use std::sync::Arc;
use std::thread;

use log::{debug, info};
use phasevox::pipeline::{AnalysisFrame, Analyzer, AnalyzerConfig};
use tokio::sync::{broadcast, oneshot};

use crate::error::{Result, ServiceError};
use crate::protocol::{Command, ServerMessage, SessionSnapshot};
use crate::session::{Outcome, Session};

/// Events queued per subscriber before the oldest are dropped.
pub const SUBSCRIBER_QUEUE: usize = 1024;

#[derive(Clone, Debug)]
pub enum Event {
    /// Frame number counts hops since the stream (re)started.
    Frame { number: u64, frame: Arc<AnalysisFrame> },
    State(SessionSnapshot),
    EndOfStream { frames: u64 },
    Quit,
}

pub enum Input {
    Audio(Vec<f64>),
    EndOfInput,
    Control {
        command: Command,
        reply: oneshot::Sender<ServerMessage>,
    },
    Snapshot(oneshot::Sender<SessionSnapshot>),
    PhaseMaps(bool),
}

pub struct Engine {
    analyzer: Analyzer<f64>,
    session: Session,
    frames: u64,
}

impl Engine {
    pub fn new(config: AnalyzerConfig, session: Session) -> Result<Self> {
        let mut analyzer = Analyzer::new(config)?;
        analyzer.set_level_calibration(session.calibration().cloned());
        Ok(Self { analyzer, session, frames: 0 })
    }

    pub fn analyzer(&self) -> &Analyzer<f64> {
        &self.analyzer
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    pub fn frames_emitted(&self) -> u64 {
        self.frames
    }

    pub fn set_phase_maps(&mut self, enabled: bool) {
        self.analyzer.set_phase_maps(enabled);
    }

    /// Analyzes and buffers a captured block. Input is discarded while
    /// stopped.
    pub fn process(&mut self, block: &[f64]) -> Vec<AnalysisFrame> {
        if !self.session.is_monitoring() {
            return Vec::new();
        }
        self.session.record(block);
        let frames = self.analyzer.push(block);
        self.observe(&frames);
        frames
    }

    /// Flushes frames still waiting for look-ahead.
    pub fn finish(&mut self) -> Vec<AnalysisFrame> {
        if !self.session.is_monitoring() {
            return Vec::new();
        }
        let frames = self.analyzer.finish();
        self.observe(&frames);
        frames
    }

    fn observe(&mut self, frames: &[AnalysisFrame]) {
        for frame in frames {
            self.session.observe(frame);
        }
        self.frames += frames.len() as u64;
    }

    pub fn control(&mut self, command: &Command) -> (ServerMessage, Outcome) {
        match self.session.apply(command) {
            Ok(outcome) => {
                if outcome.restart {
                    self.analyzer.reset();
                    self.frames = 0;
                }
                if let Some(calibration) = &outcome.calibration {
                    self.analyzer.set_level_calibration(Some(calibration.clone()));
                }
                let message = ServerMessage::Ack { command: command.name(), state: self.session.snapshot() };
                (message, outcome)
            }
            Err(reason) => {
                debug!("{:?} rejected: {reason}", command.name());
                let message = ServerMessage::Rejected {
                    command: command.name(),
                    reason,
                    state: self.session.snapshot(),
                };
                (message, Outcome::default())
            }
        }
    }

    pub fn snapshot(&self) -> SessionSnapshot {
        self.session.snapshot()
    }
}

/// Sending side of a running engine.
#[derive(Clone)]
pub struct EngineHandle {
    input: mpsc::Sender<Input>,
    events: broadcast::Sender<Event>,
    pub sample_rate_hz: f64,
    pub hop_samples: usize,
}

impl EngineHandle {
    pub fn input(&self) -> mpsc::Sender<Input> {
        self.input.clone()
    }

    pub fn subscribe(&self) -> broadcast::Receiver<Event> {
        self.events.subscribe()
    }

    pub fn frame_rate(&self) -> f64 {
        self.sample_rate_hz / self.hop_samples as f64
    }

    fn send(&self, input: Input) -> Result<()> {
        self.input.send(input).map_err(|_| ServiceError::EngineGone)
    }

    pub async fn control(&self, command: Command) -> Result<ServerMessage> {
        let (reply, response) = oneshot::channel();
        self.send(Input::Control { command, reply })?;
        response.await.map_err(|_| ServiceError::EngineGone)
    }

    pub async fn snapshot(&self) -> Result<SessionSnapshot> {
        let (reply, response) = oneshot::channel();
        self.send(Input::Snapshot(reply))?;
        response.await.map_err(|_| ServiceError::EngineGone)
    }

    pub fn set_phase_maps(&self, enabled: bool) -> Result<()> {
        self.send(Input::PhaseMaps(enabled))
    }
}

/// Runs `engine` on its own thread until QUIT or until every input sender
/// is gone.
pub fn spawn(engine: Engine) -> (EngineHandle, thread::JoinHandle<()>) {
    let (input, inbox) = mpsc::channel();
    let (events, _) = broadcast::channel(SUBSCRIBER_QUEUE);
    let config = engine.analyzer().config();
    let handle = EngineHandle {
        input,
        events: events.clone(),
        sample_rate_hz: config.sample_rate_hz,
        hop_samples: config.hop_samples,
    };
    let thread = thread::Builder::new()
        .name("analysis".into())
        .spawn(move || run(engine, inbox, events))
        .expect("spawn analysis thread");
    (handle, thread)
}

fn run(mut engine: Engine, inbox: mpsc::Receiver<Input>, events: broadcast::Sender<Event>) {
    let publish = |events: &broadcast::Sender<Event>, start: u64, frames: Vec<AnalysisFrame>| {
        for (i, frame) in frames.into_iter().enumerate() {
            // No receivers is not an error; frames are simply not wanted.
            let _ = events.send(Event::Frame { number: start + i as u64, frame: Arc::new(frame) });
        }
    };
    while let Ok(input) = inbox.recv() {
        match input {
            Input::Audio(block) => {
                let start = engine.frames_emitted();
                let frames = engine.process(&block);
                publish(&events, start, frames);
            }
            Input::EndOfInput => {
                let start = engine.frames_emitted();
                let frames = engine.finish();
                publish(&events, start, frames);
                info!("input ended after {} frames", engine.frames_emitted());
                let _ = events.send(Event::EndOfStream { frames: engine.frames_emitted() });
            }
            Input::Control { command, reply } => {
                let (message, outcome) = engine.control(&command);
                let accepted = matches!(message, ServerMessage::Ack { .. });
                let _ = reply.send(message);
                if accepted {
                    let _ = events.send(Event::State(engine.snapshot()));
                }
                if outcome.quit {
                    let _ = events.send(Event::Quit);
                    return;
                }
            }
            Input::Snapshot(reply) => {
                let _ = reply.send(engine.snapshot());
            }
            Input::PhaseMaps(enabled) => engine.set_phase_maps(enabled),
        }
    }
}
