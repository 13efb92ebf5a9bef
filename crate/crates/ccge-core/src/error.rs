use alloc::string::String;
use core::fmt;

/// Error type shared across the core modules.
#[derive(Debug, Clone, PartialEq)]
pub enum CoreError {
    /// Tensor or vector dimensions do not line up; names the offending item.
    Shape(String),
    /// A numeric quantity that must be finite was not.
    NonFinite(String),
    /// Invalid configuration value detected before training starts.
    Config(String),
    /// Checkpoint document version differs from the supported one.
    CheckpointVersion { found: u32, expected: u32 },
    /// Checkpoint document could not be parsed.
    CheckpointCorrupt(String),
    /// Replay buffer does not yet hold enough transitions to sample a batch.
    WarmupIncomplete { stored: usize, requested: usize },
    /// Operation requested on an oracle that does not support it.
    Oracle(String),
    /// Statistic requested on an empty or too-small collection.
    Stats(String),
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::Shape(msg) => write!(f, "shape error: {msg}"),
            CoreError::NonFinite(msg) => write!(f, "non-finite value: {msg}"),
            CoreError::Config(msg) => write!(f, "config error: {msg}"),
            CoreError::CheckpointVersion { found, expected } => {
                write!(f, "checkpoint version {found} unsupported (expected {expected})")
            }
            CoreError::CheckpointCorrupt(msg) => write!(f, "corrupt checkpoint: {msg}"),
            CoreError::WarmupIncomplete { stored, requested } => write!(
                f,
                "warmup incomplete: buffer holds {stored} transitions, batch of {requested} requested"
            ),
            CoreError::Oracle(msg) => write!(f, "oracle error: {msg}"),
            CoreError::Stats(msg) => write!(f, "statistics error: {msg}"),
        }
    }
}

impl core::error::Error for CoreError {}
