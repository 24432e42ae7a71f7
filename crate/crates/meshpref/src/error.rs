//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("face index {index} out of range at line {line} (vertex count {vertex_count})")]
    FaceIndexOutOfRange {
        line: usize,
        index: isize,
        vertex_count: usize,
    },

    #[error("vertex {vertex} is isolated (not referenced by any non-degenerate face)")]
    IsolatedVertex { vertex: usize },

    #[error("face {face} is degenerate (area below threshold)")]
    DegenerateFace { face: usize },

    #[error("invalid simplification target {target}: must be at least 4 faces")]
    InvalidTarget { target: usize },

    #[error("mesh has no non-degenerate faces")]
    NoUsableFaces,

    #[error("mesh has {faces} faces, exceeding the {capacity}-face patch capacity; simplify or fuse it first")]
    Capacity { faces: usize, capacity: usize },

    #[error("invalid bandwidth: sigma must be positive (got {0})")]
    InvalidBandwidth(f64),

    #[error("embedding dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("non-finite value in input: {0}")]
    NonFinite(String),

    #[error("log of non-positive kernel sum ({0}); numeric domain error")]
    NumericDomain(f64),

    #[error("covariance matrix is not symmetric positive definite")]
    NotSpd,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("divergence term requires both a preferred and a dispreferred population; {0} list is empty")]
    EmptyPopulation(&'static str),

    #[error("dataset contains no {0} items; increase the item count")]
    SinglePopulation(&'static str),

    #[error("invalid harness configuration: {0}")]
    InvalidHarnessConfig(String),

    #[error("step {step} out of range [0, {total}]")]
    StepOutOfRange { step: usize, total: usize },

    #[error("deformation at step {step} made face {face} degenerate")]
    DegenerateDeformation { step: usize, face: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{0}")]
    Format(String),
}

impl Error {
    /// Short machine-parsable code, one per error family, for CLI diagnostics.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "E_PARSE",
            Error::FaceIndexOutOfRange { .. } => "E_FACE_INDEX",
            Error::IsolatedVertex { .. } => "E_ISOLATED_VERTEX",
            Error::DegenerateFace { .. } => "E_DEGENERATE_FACE",
            Error::InvalidTarget { .. } => "E_INVALID_TARGET",
            Error::NoUsableFaces => "E_NO_USABLE_FACES",
            Error::Capacity { .. } => "E_CAPACITY",
            Error::InvalidBandwidth(_) => "E_BANDWIDTH",
            Error::DimensionMismatch { .. } => "E_DIM_MISMATCH",
            Error::NonFinite(_) => "E_NON_FINITE",
            Error::NumericDomain(_) => "E_NUMERIC_DOMAIN",
            Error::NotSpd => "E_NOT_SPD",
            Error::ShapeMismatch(_) => "E_SHAPE",
            Error::EmptyPopulation(_) => "E_EMPTY_POPULATION",
            Error::SinglePopulation(_) => "E_SINGLE_POPULATION",
            Error::InvalidHarnessConfig(_) => "E_HARNESS_CONFIG",
            Error::StepOutOfRange { .. } => "E_STEP_RANGE",
            Error::DegenerateDeformation { .. } => "E_DEGENERATE_DEFORM",
            Error::Io(_) => "E_IO",
            Error::Json(_) => "E_JSON",
            Error::Format(_) => "E_FORMAT",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
