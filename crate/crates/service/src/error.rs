use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Analysis(#[from] phasevox::Error),

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("input unavailable: {0}")]
    Input(String),

    #[error("protocol error: {0}")]
    Protocol(#[from] serde_json::Error),

    #[error("websocket error: {0}")]
    WebSocket(Box<tokio_tungstenite::tungstenite::Error>),

    #[error("analysis engine stopped")]
    EngineGone,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<tokio_tungstenite::tungstenite::Error> for ServiceError {
    fn from(e: tokio_tungstenite::tungstenite::Error) -> Self {
        Self::WebSocket(Box::new(e))
    }
}

pub type Result<T> = std::result::Result<T, ServiceError>;
