use std::path::PathBuf;

use crate::dataset::ClassLabel;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("mask selects no positions")]
    EmptyMask,

    #[error("failed to parse {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("duplicate slide id `{0}`")]
    DuplicateSlideId(String),

    #[error("slide `{0}` has no cells")]
    EmptySlide(String),

    #[error("labeled dataset has no slides of {0}")]
    MissingClass(ClassLabel),

    #[error("need at least {needed} labeled slides of {class}, found {found}")]
    InsufficientSlides {
        class: ClassLabel,
        needed: usize,
        found: usize,
    },

    #[error("invalid planted spec: {0}")]
    InvalidSpec(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("too few points: need more than {needed}, found {found}")]
    TooFewPoints { needed: usize, found: usize },

    #[error("not enough reference slides of {class}: requested {requested}, available {available}")]
    NotEnoughReferenceSlides {
        class: ClassLabel,
        requested: usize,
        available: usize,
    },

    #[error("model is not fitted")]
    NotFitted,

    #[error("no points supplied")]
    NoPoints,

    #[error("training set is empty or has fewer than two rows")]
    EmptyTrainingSet,

    #[error("training labels contain a single class")]
    DegenerateLabels,

    #[error("class {class} has {found} patients; at least 2 are needed to split")]
    TooFewPatients { class: ClassLabel, found: usize },

    #[error("unknown slide `{0}`")]
    UnknownSlide(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl std::fmt::Display) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.to_string(),
        }
    }
}
