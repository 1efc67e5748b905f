use thiserror::Error;

use crate::agent::TrainReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the harness can report, from byte decoding up to training.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    /// The input ended before a whole message was available. Retry once at
    /// least `needed` bytes are buffered.
    #[error("incomplete message: need at least {needed} bytes")]
    Incomplete { needed: usize },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("unsupported encoding: {0}")]
    UnsupportedEncoding(String),

    #[error("unsupported protocol version {0:?}")]
    UnsupportedVersion(String),

    #[error("server offers no supported security type (offered {0:?})")]
    UnsupportedSecurity(Vec<u8>),

    #[error("handshake refused: {0}")]
    HandshakeRefused(String),

    #[error("cannot encode message: {0}")]
    Encoding(String),

    #[error("invalid pixel format: {0}")]
    InvalidPixelFormat(String),

    #[error("update rejected: {0}")]
    UpdateRejected(String),

    #[error("unsupported pixel format: {0}")]
    UnsupportedFormat(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("timed out connecting to {0}")]
    ConnectTimeout(String),

    #[error("connection lost: {0}")]
    ConnectionLost(String),

    #[error("no framebuffer update within {0:?}")]
    FrameTimeout(std::time::Duration),

    #[error("terminal screen persisted past the reset deadline")]
    ResetTimeout,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("callback failed: {0}")]
    Callback(String),

    #[error("training aborted after {} episodes: {source}", partial.scores.len())]
    TrainingAborted {
        partial: Box<TrainReport>,
        source: Box<Error>,
    },
}

impl Error {
    /// True for errors that mean "wait for more bytes", not "give up".
    pub fn is_incomplete(&self) -> bool {
        matches!(self, Error::Incomplete { .. })
    }
}
