use std::path::PathBuf;

use thiserror::Error;

use crate::adversarial::LossBreakdown;
use crate::harness::IterationRecord;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },
    #[error("non-finite value produced by {0}")]
    Numeric(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("empty input to {0}")]
    EmptyInput(&'static str),
    #[error("scheduler state error: {0}")]
    State(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("parse error at line {line}: {detail}")]
    Parse { line: usize, detail: String },
    #[error("stage {stage}: {source}")]
    Stage {
        stage: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("non-finite loss component ({breakdown})")]
    NonFiniteLoss { breakdown: LossBreakdown },
    #[error("training aborted at epoch {} step {}: {source}", record.epoch, record.step)]
    Aborted {
        record: Box<IterationRecord>,
        #[source]
        source: Box<Error>,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Coarse error classes, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Numeric,
    Io,
    Other,
}

impl Error {
    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Shape {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) => ErrorKind::Config,
            Error::Numeric(_) | Error::NonFiniteLoss { .. } | Error::Domain { .. } => ErrorKind::Numeric,
            Error::Io { .. } | Error::Json(_) | Error::Parse { .. } => ErrorKind::Io,
            Error::Stage { source, .. } | Error::Aborted { source, .. } => source.kind(),
            _ => ErrorKind::Other,
        }
    }
}
