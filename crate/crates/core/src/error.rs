use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HcrError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("empty interaction log")]
    EmptyLog,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid world spec: {0}")]
    InvalidWorld(String),
    #[error("invalid causal model: {0}")]
    InvalidScm(String),
    #[error("positivity violated: {0}")]
    Positivity(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("no clicked records available for the like task")]
    NoClickedRecords,
    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("variant {variant} cannot score a {mode} model")]
    VariantMismatch { variant: String, mode: String },
    #[error("no candidate items for user {0}")]
    NoCandidates(usize),
    #[error("no evaluable users")]
    NoEvaluableUsers,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, HcrError>;

impl HcrError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HcrError::Io { path: path.into(), source }
    }
}
