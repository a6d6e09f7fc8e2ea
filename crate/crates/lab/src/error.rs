use std::path::PathBuf;

use fsdlab_core::lm::checkpoint::CheckpointError;
use serde::Serialize;

pub type Result<T, E = LabError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    MalformedLine { path: PathBuf, line: usize, message: String },
    #[error("{path}:{line}: unknown label {value} (expected 1 = member or 0 = non-member)")]
    UnknownLabel { path: PathBuf, line: usize, value: String },
    #[error("{path}: {source}")]
    Checkpoint { path: PathBuf, source: CheckpointError },
    #[error("{path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error(transparent)]
    Core(#[from] fsdlab_core::Error),
}

/// Process exit codes, one per failure family.
pub mod exit {
    pub const OTHER: u8 = 1;
    pub const USAGE: u8 = 2;
    pub const IO: u8 = 3;
    pub const CONFIG: u8 = 4;
    pub const DEGENERATE: u8 = 5;
    pub const FORMAT: u8 = 6;
}

#[derive(Serialize)]
pub struct ErrorDoc<'a> {
    pub error: &'a str,
    pub message: String,
    pub exit_code: u8,
}

impl LabError {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> LabError {
        let path = path.into();
        move |source| LabError::Io { path, source }
    }

    pub fn kind(&self) -> &'static str {
        use fsdlab_core::Error as E;
        match self {
            LabError::Io { .. } => "io",
            LabError::MalformedLine { .. } | LabError::UnknownLabel { .. } | LabError::Checkpoint { .. } => "format",
            LabError::Config { .. } => "config",
            LabError::Core(e) => match e {
                E::Config(_) | E::ShapeMismatch(_) => "config",
                E::Degenerate(_) | E::EmptyFinetuneSet(_) | E::EmptyInput | E::InsufficientTokens { .. } => "degenerate",
                E::Checkpoint(_) => "format",
                E::SequenceTooLong { .. } | E::Diverged { .. } => "other",
            },
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self.kind() {
            "io" => exit::IO,
            "config" => exit::CONFIG,
            "degenerate" => exit::DEGENERATE,
            "format" => exit::FORMAT,
            _ => exit::OTHER,
        }
    }

    pub fn to_json(&self) -> String {
        let doc = ErrorDoc { error: self.kind(), message: self.to_string(), exit_code: self.exit_code() };
        serde_json::to_string(&doc).expect("error document serializes")
    }
}
