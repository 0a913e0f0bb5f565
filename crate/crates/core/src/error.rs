use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {field}: {message}")]
    Config { field: String, message: String },

    #[error("slate size {slate_size} exceeds the {candidates} candidates available per slate")]
    SlateTooLarge { slate_size: usize, candidates: usize },

    #[error("cluster sets overlap on segment {0}")]
    OverlappingClusters(usize),

    #[error("cluster set `{0}` is empty")]
    EmptyClusterSet(&'static str),

    #[error("category id {id} in slot {slot} is outside the vocabulary of size {vocab}")]
    OutOfVocab { slot: usize, id: u32, vocab: usize },

    #[error("feature shape mismatch: expected {expected} {what}, got {got}")]
    FeatureShape { what: &'static str, expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("length mismatch: {what} ({left} vs {right})")]
    LengthMismatch { what: &'static str, left: usize, right: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("degenerate batch: sum of relevance scores {0:e} is below 1e-12")]
    DegenerateBatch(f64),

    #[error("position {position} has {count} randomized impressions, fewer than the required {min_count}")]
    InsufficientPositionSamples { position: usize, count: usize, min_count: usize },

    #[error("position {0} is not covered by the propensity table")]
    MissingPosition(usize),

    #[error("impression at position {0} is not from the randomized slice")]
    NotRandomized(usize),

    #[error("propensity weights sum to zero")]
    ZeroWeightSum,

    #[error("AUC needs both classes, got {positives} positives and {negatives} negatives")]
    SingleClass { positives: usize, negatives: usize },

    #[error("no impressions fall into the model's top-{0}")]
    EmptyTopK(usize),

    #[error("training diverged at epoch {epoch}: {reason}")]
    Diverged {
        epoch: usize,
        reason: String,
        history: Box<crate::trainer::TrainHistory>,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("malformed data in {path}: {message}")]
    Data { path: PathBuf, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
