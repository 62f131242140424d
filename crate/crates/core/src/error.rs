use std::path::PathBuf;

use crate::layout::NodeId;

/// Errors surfaced by the simulator, the learning stack and the experiment layer.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid action: picker {picker} cannot be sent to node {node}: {reason}")]
    InvalidAction {
        picker: usize,
        node: NodeId,
        reason: &'static str,
    },

    #[error("simulation integrity fault at t={time:.3}s: {message}")]
    Integrity { time: f64, message: String },

    #[error("training fault: {0}")]
    Training(String),

    #[error("infeasible schedule: {0}")]
    Infeasible(String),

    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Process exit status: 2 for bad input, 3 for a simulation fault.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Json(_) | Error::Checkpoint { .. } => 2,
            Error::Integrity { .. } | Error::InvalidAction { .. } | Error::Infeasible(_) => 3,
            _ => 1,
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
