use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no CTC alignment of {labels} labels fits in {frames} frames (needs at least {min_frames})")]
    InfeasibleAlignment {
        frames: usize,
        labels: usize,
        min_frames: usize,
    },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("shape mismatch in {context}: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        context: &'static str,
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("alignment enumeration limited to F <= {max_frames} and classes <= {max_classes}, got F={frames}, classes={classes}")]
    OracleScaleExceeded {
        frames: usize,
        classes: usize,
        max_frames: usize,
        max_classes: usize,
    },

    #[error("epoch {epoch} outside 1..={total}")]
    EpochOutOfRange { epoch: usize, total: usize },

    #[error("backward called without a matching forward pass")]
    BackwardWithoutForward,

    #[error("reference sequence is empty; error rate is undefined")]
    EmptyReference,

    #[error("decoded transcripts differ: {left:?} vs {right:?}")]
    TranscriptMismatch { left: Vec<usize>, right: Vec<usize> },

    #[error("method {method} trains against an external teacher but no teacher checkpoint was given")]
    MissingTeacherCheckpoint { method: String },

    #[error("checkpoint config digest {found} does not match expected {expected}")]
    ConfigDigestMismatch { expected: String, found: String },

    #[error("run directory {0} has no completed final record")]
    IncompleteRun(PathBuf),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("utterance {id}: {source}")]
    Utterance {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error("malformed dataset: {0}")]
    Dataset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    pub(crate) fn in_utterance(self, id: &str) -> Self {
        Error::Utterance {
            id: id.to_string(),
            source: Box::new(self),
        }
    }
}
