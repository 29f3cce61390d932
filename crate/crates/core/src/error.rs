use thiserror::Error;

/// Errors raised by the geometry, flow and verification layers.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("degenerate mesh at node {index}: {reason}")]
    DegenerateMesh { index: usize, reason: String },

    #[error("tangent frame is not orthonormal: {0}")]
    Frame(String),

    #[error("invalid weight field: {0}")]
    Weight(String),

    #[error("invalid configuration `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("step rejected at t = {t}: {reason}")]
    StepRejected { t: f64, reason: String },

    #[error("cannot write {path}: {message}")]
    Io { path: String, message: String },

    #[error("radial solution queried at t = {t} past extinction time {extinction}")]
    PastExtinction { t: f64, extinction: f64 },
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
