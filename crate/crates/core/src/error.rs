//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the simulator.
#[derive(Debug, Error)]
pub enum Error {
    /// Two parameter vectors (or a vector/weight list pair) disagree in length.
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    /// An operation received an empty input where at least one element is required.
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    /// A value that must be finite was NaN or infinite.
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    /// A scalar argument fell outside its documented range.
    #[error("invalid argument: {what} = {value}")]
    InvalidArgument { what: &'static str, value: f64 },

    /// A partition request asked for more examples than are available.
    #[error("oversubscribed partition: requested {requested} examples, only {available} available")]
    Oversubscribed { requested: usize, available: usize },

    /// Every client reported a zero quality score; Score normalization is undefined.
    #[error("all client scores are zero; quality factors are undefined")]
    DegenerateQuality,

    /// Local training produced a non-finite parameter.
    #[error("training diverged on client {client_id}")]
    TrainingDiverged { client_id: usize },

    /// A strategy name did not match any known aggregator.
    #[error("unknown strategy `{name}`; valid strategies: {valid}")]
    UnknownStrategy { name: String, valid: String },

    /// A checkpoint file had the wrong magic bytes or version.
    #[error("bad checkpoint file {path}: {reason}")]
    BadCheckpoint { path: String, reason: String },

    /// Configuration file could not be parsed.
    #[error("config error in {path}: {reason}")]
    Config { path: String, reason: String },

    /// Dataset file could not be parsed.
    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
