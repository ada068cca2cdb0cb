//! Crate-wide error type.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    // volume I/O and normalization
    #[error("file not found: {0}")]
    MissingFile(PathBuf),
    #[error("malformed NIfTI header in {path}: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },
    #[error("non-finite voxel data ({count} NaN/Inf values) in {context}")]
    NonFiniteData { context: String, count: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("empty b0 list: DWI normalization needs at least one b0 volume")]
    EmptyB0List,
    #[error("volume is identically zero; cannot normalize")]
    AllZeroVolume,
    #[error("voxel spacing mismatch beyond resampling tolerance: {0}")]
    SpacingMismatch(String),
    #[error("expected modality {expected}, got {got}")]
    WrongModality { expected: String, got: String },

    // patch pipeline
    #[error("volume too small: {0}")]
    VolumeTooSmall(String),
    #[error("no foreground: no patch corner satisfies the foreground rule")]
    NoForeground,
    #[error("insufficient subjects: need {needed}, found {found}")]
    InsufficientSubjects { needed: usize, found: usize },
    #[error("scale factor {0} outside the training range [2, 3]")]
    ScaleOutOfRange(f64),
    #[error("malformed manifest line {line}: {reason}")]
    ManifestFormat { line: usize, reason: String },
    #[error("malformed patch cache {path}: {reason}")]
    CacheFormat { path: PathBuf, reason: String },

    // coordinates and networks
    #[error("coordinate out of range: component {value} not in [-1, 1]")]
    CoordOutOfRange { value: f64 },
    #[error("non-finite input to {0}")]
    NonFiniteInput(String),
    #[error("invalid network config: {0}")]
    InvalidNetworkConfig(String),
    #[error("input spatial shape too small: {0}")]
    ShapeTooSmall(String),

    // training
    #[error("epoch {epoch} out of range (total {total})")]
    EpochOutOfRange { epoch: usize, total: usize },
    #[error("non-finite loss at epoch {epoch}, step {step} (l_r={l_r}, l_k={l_k})")]
    NonFiniteLoss {
        epoch: usize,
        step: usize,
        l_r: f64,
        l_k: f64,
    },
    #[error("checkpoint incompatible: {0}")]
    CheckpointIncompatible(String),
    #[error("malformed checkpoint {path}: {reason}")]
    CheckpointFormat { path: PathBuf, reason: String },

    // inference and evaluation
    #[error("invalid scale {0}: scale must exceed 1")]
    InvalidScale(f64),
    #[error("empty test split: nothing to evaluate")]
    EmptyTestSplit,

    // configuration / CLI
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Exit code contract: 0 success, 1 runtime failure, 2 usage/config error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::MissingFile(_)
            | Error::ManifestFormat { .. }
            | Error::InsufficientSubjects { .. } => 2,
            _ => 1,
        }
    }
}
