use std::path::PathBuf;

use crate::MonthId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("corrupt or unreadable dump stream: {0}")]
    CorruptStream(String),

    #[error("record {id} belongs to {found}, expected {expected}")]
    ForeignMonth {
        id: String,
        expected: MonthId,
        found: MonthId,
    },

    #[error("no comments survived filtering for {0}")]
    EmptyCorpus(MonthId),

    #[error("corpus has no context with at least two tokens")]
    UntrainableCorpus,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown subreddit: {0}")]
    UnknownSubreddit(String),

    #[error("subreddit {0} has a zero vector")]
    ZeroVector(String),

    #[error("operation requires an L2-normalized model")]
    NotNormalized,

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("query {0} is not solvable under this vocabulary")]
    Unsolvable(String),

    #[error("clusterings are defined over different point sets")]
    MismatchedPoints,

    #[error("clusters {0} and {1} have coincident centroids")]
    CoincidentCentroids(usize, usize),

    #[error("at least {needed} clusters required, got {got}")]
    TooFewClusters { needed: usize, got: usize },

    #[error("insufficient ratings: {0}")]
    InsufficientRatings(String),

    #[error("clusters without ratings: {0:?}")]
    UnratedClusters(Vec<usize>),

    #[error("series has zero variance")]
    ZeroVariance,

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid annotation: {0}")]
    InvalidAnnotation(String),

    #[error("malformed file {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
