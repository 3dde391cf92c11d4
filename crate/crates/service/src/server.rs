//! WebSocket front end. Each connection gets a hello, then frames once it
//! subscribes; control commands are answered with an ack or a rejection and
//! every accepted command is followed by a state broadcast.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{mpsc, Arc, Mutex};

use futures_util::{SinkExt, StreamExt};
use log::{debug, info, warn};
use phasevox::pipeline::AnalysisFrame;
use serde::Serialize;
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::broadcast::error::RecvError;
use tokio_tungstenite::tungstenite::Message;

use crate::engine::{EngineHandle, Event};
use crate::error::Result;
use crate::protocol::{ClientMessage, Decimation, ServerMessage, SCHEMA_VERSION};

#[derive(Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Outgoing<'a> {
    Frame(&'a AnalysisFrame),
}

struct Shared {
    engine: EngineHandle,
    // Fired by the first subscription; lets file input wait for a reader.
    start: Mutex<Option<mpsc::Sender<()>>>,
    phase_map_subscribers: AtomicUsize,
}

impl Shared {
    fn start_input(&self) {
        if let Some(start) = self.start.lock().unwrap().take() {
            let _ = start.send(());
        }
    }

    fn want_phase_maps(&self, wanted: bool) {
        let before = if wanted {
            self.phase_map_subscribers.fetch_add(1, Ordering::SeqCst)
        } else {
            self.phase_map_subscribers.fetch_sub(1, Ordering::SeqCst)
        };
        let turned_on = wanted && before == 0;
        let turned_off = !wanted && before == 1;
        if turned_on || turned_off {
            let _ = self.engine.set_phase_maps(wanted);
        }
    }
}

/// Accepts connections until a client sends QUIT or the engine stops.
pub async fn serve(listener: TcpListener, engine: EngineHandle, start: Option<mpsc::Sender<()>>) -> Result<()> {
    let shared = Arc::new(Shared {
        engine: engine.clone(),
        start: Mutex::new(start),
        phase_map_subscribers: AtomicUsize::new(0),
    });
    let mut events = engine.subscribe();
    info!("listening on {}", listener.local_addr()?);
    loop {
        tokio::select! {
            accepted = listener.accept() => {
                let (stream, peer) = accepted?;
                debug!("connection from {peer}");
                let shared = Arc::clone(&shared);
                tokio::spawn(async move {
                    if let Err(e) = connection(stream, shared).await {
                        debug!("{peer}: {e}");
                    }
                });
            }
            event = events.recv() => match event {
                Ok(Event::Quit) | Err(RecvError::Closed) => {
                    info!("session closed");
                    return Ok(());
                }
                _ => {}
            },
        }
    }
}

async fn connection(stream: TcpStream, shared: Arc<Shared>) -> Result<()> {
    let socket = tokio_tungstenite::accept_async(stream).await?;
    let (mut sink, mut incoming) = socket.split();
    let mut events = shared.engine.subscribe();
    let hello = ServerMessage::Hello {
        schema_version: SCHEMA_VERSION,
        sample_rate_hz: shared.engine.sample_rate_hz,
        hop_samples: shared.engine.hop_samples,
        state: shared.engine.snapshot().await?,
    };
    sink.send(Message::text(serde_json::to_string(&hello)?)).await?;

    let mut subscription: Option<(Decimation, bool)> = None;
    let result = loop {
        tokio::select! {
            message = incoming.next() => {
                let text = match message {
                    Some(Ok(Message::Text(text))) => text,
                    Some(Ok(Message::Close(_))) | None => break Ok(()),
                    Some(Ok(_)) => continue,
                    Some(Err(e)) => break Err(e.into()),
                };
                let reply = match serde_json::from_str::<ClientMessage>(text.as_str()) {
                    Ok(ClientMessage::Subscribe { fps, phase_maps }) => {
                        let was = subscription.map(|(_, maps)| maps).unwrap_or(false);
                        if was != phase_maps {
                            shared.want_phase_maps(phase_maps);
                        }
                        subscription = Some((Decimation::for_fps(fps, shared.engine.frame_rate()), phase_maps));
                        shared.start_input();
                        None
                    }
                    Ok(ClientMessage::Control { command }) => Some(shared.engine.control(command).await?),
                    Err(e) => Some(ServerMessage::Error { message: format!("bad message: {e}") }),
                };
                if let Some(reply) = reply {
                    sink.send(Message::text(serde_json::to_string(&reply)?)).await?;
                }
            }
            event = events.recv() => {
                let text = match event {
                    Ok(Event::Frame { number, frame }) => match subscription {
                        Some((decimation, maps)) if decimation.keeps(number) => frame_text(&frame, maps)?,
                        _ => continue,
                    },
                    Ok(Event::State(state)) => serde_json::to_string(&ServerMessage::State { state })?,
                    Ok(Event::EndOfStream { frames }) => serde_json::to_string(&ServerMessage::EndOfStream { frames })?,
                    Ok(Event::Quit) | Err(RecvError::Closed) => {
                        let _ = sink.send(Message::Close(None)).await;
                        break Ok(());
                    }
                    Err(RecvError::Lagged(skipped)) => {
                        warn!("slow subscriber skipped {skipped} events");
                        continue;
                    }
                };
                sink.send(Message::text(text)).await?;
            }
        }
    };
    if subscription.is_some_and(|(_, maps)| maps) {
        shared.want_phase_maps(false);
    }
    result
}

fn frame_text(frame: &AnalysisFrame, phase_maps: bool) -> serde_json::Result<String> {
    if !phase_maps && frame.phase_maps.is_some() {
        let stripped = AnalysisFrame { phase_maps: None, ..frame.clone() };
        return serde_json::to_string(&Outgoing::Frame(&stripped));
    }
    serde_json::to_string(&Outgoing::Frame(frame))
}
