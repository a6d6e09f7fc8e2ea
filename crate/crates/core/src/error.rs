use alloc::string::String;

use crate::lm::checkpoint::CheckpointError;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum Error {
    #[error("sequence of {len} tokens exceeds context length {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("sequence of {len} token(s) has nothing to score")]
    InsufficientTokens { len: usize },
    #[error("empty input text")]
    EmptyInput,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("model shapes differ: {0}")]
    ShapeMismatch(String),
    #[error("training diverged at step {step}: loss {loss}")]
    Diverged { step: usize, loss: f64 },
    #[error("fine-tuning set is empty: {0}")]
    EmptyFinetuneSet(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
