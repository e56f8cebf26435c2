use std::path::PathBuf;

/// Crate-wide error type.
///
/// Everything except [`Error::Io`] is a contract violation: bad input data,
/// a precondition that does not hold, or a numeric breakdown. The CLI maps
/// contract violations to exit code 2 and I/O failures to exit code 1.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),

    #[error("invalid weight {value} at index {index}: must lie in [0, 1]")]
    InvalidWeight { index: usize, value: f64 },

    #[error("empty mask: {0}")]
    EmptyMask(&'static str),

    #[error("degenerate extent: {0}")]
    DegenerateExtent(&'static str),

    #[error("invalid camera: {0}")]
    InvalidCamera(&'static str),

    #[error("invalid cuboid: {0}")]
    InvalidCuboid(&'static str),

    #[error("cuboid corner at or behind the camera plane (z = {0})")]
    BehindCamera(f64),

    #[error("segmenter contract violated: {0}")]
    ContractViolation(String),

    #[error("patch layout requires dimensions divisible by 8, got {0}x{1}")]
    LayoutError(usize, usize),

    #[error("insufficient history: track has {0} usable states, need at least {1}")]
    InsufficientHistory(usize, usize),

    #[error("non-finite value in {0}")]
    NumericError(&'static str),

    #[error("invalid track: {0}")]
    InvalidTrack(String),

    #[error("scene generation failed: {0}")]
    GenerationError(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty report: {0}")]
    EmptyReport(&'static str),

    #[error("degenerate fit: {0}")]
    DegenerateFit(&'static str),

    #[error("unpaired scenes in dataset: {0:?}")]
    UnpairedScenes(Vec<String>),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Process exit code the CLI should use for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::Format { .. } => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
