use thiserror::Error;

use crate::tendon_model::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("joint `{0}` is not defined by the finger model")]
    UnknownJoint(String),

    #[error("frame index {index} out of range (model has {count} frames)")]
    InvalidFrame { index: usize, count: usize },

    #[error("link `{name}` has nonpositive length {length}")]
    NonPositiveLink { name: String, length: f64 },

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid tendon graph:\n{0}")]
    InvalidGraph(ValidationReport),

    #[error(
        "branch count by path enumeration ({enumerated}) differs from n_m + sum(out-degree - 1) = {formula}; \
         a fan-out junction is reachable along more than one path"
    )]
    BranchCount { enumerated: usize, formula: usize },

    #[error("tendon segment {segment} has an empty or degenerate site path")]
    DegenerateSegment { segment: usize },

    #[error("infeasible measurement: {0}")]
    Infeasible(String),

    #[error("step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("trace parse error: {0}")]
    Trace(String),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn at_step(self, step: usize) -> Self {
        Error::Step {
            step,
            source: Box::new(self),
        }
    }
}
