use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dataset: unknown rating format {0:?} (expected ml-100k, ml-1m or csv)")]
    UnknownFormat(String),
    #[error("dataset: malformed line {line_no}: {reason}")]
    MalformedLine { line_no: usize, reason: String },
    #[error("dataset: rating out of range 1..=5 on line {line_no}: {value}")]
    RatingOutOfRange { line_no: usize, value: i64 },
    #[error("dataset: no link survives the rating threshold")]
    EmptyGraph,
    #[error("dataset: train fraction must lie strictly between 0 and 1, got {0}")]
    InvalidTrainFraction(f64),
    #[error("dataset: invalid graph: {0}")]
    InvalidGraph(String),
    #[error("dataset: index out of bounds in {what}: {index} >= {bound}")]
    IndexOutOfBounds {
        what: &'static str,
        index: usize,
        bound: usize,
    },

    #[error("scorers: beta must be non-negative, got {0}")]
    NegativeBeta(f64),
    #[error("scorers: hybrid lambda must lie in [0, 1], got {0}")]
    LambdaOutOfRange(f64),
    #[error("scorers: {0}")]
    InvalidScorerSpec(String),
    #[error("scorers: bad score dump: {0}")]
    BadScoreDump(String),

    #[error("ranking: aggregation lambda must lie in [0, 1], got {0}")]
    AggregationLambdaOutOfRange(f64),
    #[error("ranking: list length must be at least 1")]
    ZeroListLength,
    #[error("ranking: no item of degree {0} in the training graph")]
    DegreeNotPresent(u32),
    #[error("ranking: malformed recommendation line {line_no}: {reason}")]
    MalformedRecommendations { line_no: usize, reason: String },

    #[error("metrics: hamming distance needs at least two users, got {0}")]
    TooFewUsers(usize),
    #[error("metrics: gini coefficient needs at least one recommendation over n >= 2 items")]
    NoRecommendations,

    #[error("harness: lambda grid is empty")]
    EmptyGrid,
    #[error("harness: lambda grid must be strictly increasing within [0, 1]")]
    InvalidGrid,
    #[error("harness: missing run artifact {}", .0.display())]
    MissingRunArtifacts(PathBuf),
    #[error("harness: invalid config: {0}")]
    InvalidConfig(String),

    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    IoBare(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
