use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("no edges in {0}")]
    NoEdges(PathBuf),

    #[error("bad graph file: {0}")]
    Format(String),

    #[error("candidate {id} is infeasible: needs {gamma} bytes of device memory, {capacity} available")]
    Infeasible { id: u64, gamma: u64, capacity: u64 },

    #[error("estimator is not fitted: {0}")]
    State(String),

    #[error("cannot fit component {component}: {reason}")]
    Fit { component: String, reason: String },

    #[error("no candidate satisfies the requirements (tightest constraint: {tightest}; {detail})")]
    NoFeasible { tightest: String, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Param(msg.into()))
}
