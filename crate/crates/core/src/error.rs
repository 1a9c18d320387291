use thiserror::Error;

use crate::geometry::Point;

/// Errors raised by model construction, evaluation and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("point ({x}, {y}) lies outside every tile of the observation region", x = .0.x, y = .0.y)]
    OutOfRegion(Point),

    #[error("time {0} lies outside the observation period")]
    OutOfPeriod(f64),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error(
        "event times are not strictly increasing at index {index} (t = {time}); break ties first"
    )]
    TiesPresent { index: usize, time: f64 },

    #[error("tie breaking failed: {0}")]
    TieBreaking(String),

    #[error("rejection sampling gave up after {draws} draws: {context}")]
    RejectionExhausted { draws: usize, context: String },

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed JSON: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    /// True for errors caused by bad user input (files, configuration, data).
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Geometry(_)
                | Error::OutOfRegion(_)
                | Error::OutOfPeriod(_)
                | Error::Validation(_)
                | Error::Dimension(_)
                | Error::TiesPresent { .. }
                | Error::TieBreaking(_)
                | Error::Io { .. }
                | Error::Json { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
