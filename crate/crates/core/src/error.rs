//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("value {0} out of encodable range")]
    Range(f64),
    #[error("party mismatch: expected {expected}, got {got}")]
    PartyMismatch { expected: u8, got: u8 },
    #[error("usage error: {0}")]
    Usage(String),
    #[error("malformed bytes: {0}")]
    Decode(String),
    #[error("comparison key already used for a masked opening")]
    KeyReused,
    #[error("offline material exhausted")]
    MaterialExhausted,
    #[error("wrong party: file holds party {file}, caller is party {caller}")]
    WrongParty { file: u8, caller: u8 },
    #[error("corrupt file: {0}")]
    Corrupt(String),
    #[error("ingestion error: {0}")]
    Ingest(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("session aborted by server during {phase}")]
    Aborted { phase: String },
    #[error("server returned a non-binary candidate vector")]
    Inconsistent,
    #[error("network: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
