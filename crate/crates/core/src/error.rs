use std::path::PathBuf;

use thiserror::Error;

use crate::hpo::TrialRecord;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid channel spec: {0}")]
    InvalidSpec(String),

    #[error("invalid trace: {0}")]
    InvalidTrace(String),

    #[error("{}line {line}: {msg}", path.as_ref().map(|p| format!("{}: ", p.display())).unwrap_or_default())]
    Parse {
        path: Option<PathBuf>,
        line: usize,
        msg: String,
    },

    #[error("packed trace format: {0}")]
    Format(String),

    #[error("index {index} with horizon {horizon} runs past the end of a {len}-sample trace")]
    OutOfRange {
        index: usize,
        horizon: usize,
        len: usize,
    },

    #[error("no examples: trace has {len} samples but at least {min} are needed (l + N_f)")]
    NoExamples { len: usize, min: usize },

    #[error("invalid split: {0}")]
    Split(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid model config: {0}")]
    Config(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("epoch-averaged loss needs at least 6 epochs, got {0}")]
    TooFewEpochs(usize),

    #[error("no valid trials to select from")]
    NoValidTrials,

    #[error("all {} trials failed", .0.len())]
    AllTrialsFailed(Vec<TrialRecord>),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
