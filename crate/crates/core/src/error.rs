use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("insufficient poses: need at least {needed}, got {got}")]
    InsufficientPoses { needed: usize, got: usize },

    #[error("mixed parameterizations")]
    MixedParameterizations,

    #[error("invalid pose: {0}")]
    InvalidPose(String),

    #[error("not a camera-to-world matrix: bottom row is {0:?}")]
    NotCameraToWorld([f64; 4]),

    #[error("empty training set")]
    EmptyTrainSet,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("degenerate token direction (norm {norm:e})")]
    DegenerateToken { norm: f64 },

    #[error("invalid mapper config: {0}")]
    MapperConfig(String),

    #[error("prompt template: {0}")]
    Template(String),

    #[error("prompt overflow: {len} tokens exceeds {max}")]
    PromptOverflow { len: usize, max: usize },

    #[error("word not in vocabulary: {0:?}")]
    UnknownWord(String),

    #[error("timestep {t} out of range [1, {max}]")]
    TimestepOutOfRange { t: u32, max: u32 },

    #[error("layer {layer} out of range [0, {count})")]
    LayerOutOfRange { layer: u32, count: u32 },

    #[error("backend: {0}")]
    Backend(String),

    #[error("frozen-backend violation: digest changed from {before} to {after}")]
    FrozenBackendViolation { before: String, after: String },

    #[error("duplicate view index {0}")]
    DuplicateView(u32),

    #[error("duplicate scene id {0:?}")]
    DuplicateScene(String),

    #[error("data: {0}")]
    Data(String),

    #[error("image shape mismatch: {a:?} vs {b:?}")]
    ShapeMismatch { a: (usize, usize, usize), b: (usize, usize, usize) },

    #[error("image {got:?} is smaller than the {window}x{window} window")]
    ImageTooSmall { got: (usize, usize), window: usize },

    #[error("ragged grid: row {row} has {got} cells, expected {expected}")]
    RaggedGrid { row: usize, got: usize, expected: usize },

    #[error("invalid view regime {0:?}")]
    InvalidRegime(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("checkpoint was written for backend {expected}, got {got}")]
    DescriptorMismatch { expected: String, got: String },

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.to_string(),
        }
    }

    /// Process exit code for the CLI: 1 usage, 2 data, 3 backend.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Backend(_) | Error::FrozenBackendViolation { .. } => 3,
            Error::Config(_)
            | Error::InvalidRegime(_)
            | Error::Template(_)
            | Error::MapperConfig(_) => 1,
            _ => 2,
        }
    }
}
