use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum SafemrError {
    #[error("input shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("numeric fault: {0}")]
    NumericFault(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("placement failed after {tries} tries: arena too crowded")]
    Placement { tries: usize },

    #[error("empty batch")]
    EmptyBatch,

    #[error("operation unsupported for task {0}")]
    UnsupportedTask(String),

    #[error("training diverged at step {step}: {what}")]
    Diverged { step: u64, what: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config parse error: {0}")]
    Toml(String),
}
