//! Error type shared by every stage of the toolkit.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = FmdError> = std::result::Result<T, E>;

/// Broad class of a failure, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numerical,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Config => 2,
            ErrorClass::Data => 3,
            ErrorClass::Numerical => 4,
        }
    }
}

#[derive(Debug, Error)]
pub enum FmdError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },

    #[error("image is already grayscale")]
    AlreadyGrayscale,

    #[error("grayscale required, got {0} channels")]
    GrayscaleRequired(usize),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("ppm: bad magic {0:?}")]
    PpmBadMagic(String),

    #[error("ppm: unsupported maxval {0} (only 255)")]
    PpmMaxval(u32),

    #[error("ppm: malformed header: {0}")]
    PpmHeader(String),

    #[error("ppm: truncated payload: expected {expected} bytes, found {found}")]
    PpmTruncated { expected: usize, found: usize },

    #[error("weights: bad magic")]
    WeightsBadMagic,

    #[error("weights: tensor {index} has shape {found:?}, expected {expected:?}")]
    WeightsShape {
        index: usize,
        expected: (u32, u32),
        found: (u32, u32),
    },

    #[error("weights: truncated file")]
    WeightsTruncated,

    #[error("weights: {0} trailing bytes after the last tensor")]
    WeightsTrailing(usize),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: loss {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },

    #[error("ill-conditioned deconvolution: min |H| = {min_abs_h:e} with K = 0")]
    IllConditioned { min_abs_h: f64 },

    #[error("prediction vectors built with different k ({0} vs {1})")]
    MismatchedK(usize, usize),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<FmdError>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl FmdError {
    pub fn config(msg: impl Into<String>) -> Self {
        FmdError::Config(msg.into())
    }

    pub fn shape(expected: impl Into<String>, actual: impl Into<String>) -> Self {
        FmdError::Shape {
            expected: expected.into(),
            actual: actual.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FmdError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        FmdError::Parse {
            context: context.into(),
            message: message.into(),
        }
    }

    /// Wraps an error with the name of the pipeline stage that produced it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        FmdError::Stage {
            stage,
            source: Box::new(self),
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            FmdError::Config(_) | FmdError::MismatchedK(..) => ErrorClass::Config,
            FmdError::Diverged { .. } | FmdError::IllConditioned { .. } => ErrorClass::Numerical,
            FmdError::Stage { source, .. } => source.class(),
            _ => ErrorClass::Data,
        }
    }
}
