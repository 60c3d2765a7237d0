use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("trace parse error at line {line}: {msg}")]
    TraceParse { line: usize, msg: String },

    #[error("empty trace: {0}")]
    EmptyTrace(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("detector error: {0}")]
    Detector(String),

    #[error("training error: {0}")]
    Train(String),

    #[error("phase {phase} has insufficient data: {msg}")]
    InsufficientPhaseData { phase: usize, msg: String },

    #[error("non-finite gradient in parameter {0}")]
    NonFiniteGradient(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("report error: {0}")]
    Report(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
