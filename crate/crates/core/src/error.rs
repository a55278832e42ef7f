use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("trajectory sampling failed after {retries} retries at waypoint {waypoint}")]
    TrajectoryFailure { retries: usize, waypoint: usize },

    #[error("channel mismatch: expected {expected}, got {got}")]
    ChannelMismatch { expected: usize, got: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("coordinate sets differ")]
    CoordinateMismatch,

    #[error("degenerate input: {0}")]
    Degenerate(&'static str),

    #[error("no feature at voxel {0:?}")]
    MissingFeature([i32; 5]),

    #[error("loss undefined: no usable correspondences")]
    LossUndefined,

    #[error("loss node is not a scalar ({rows}x{cols})")]
    NonScalarLoss { rows: usize, cols: usize },

    #[error("format error at byte {offset}: {msg}")]
    Format { offset: u64, msg: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("non-finite loss at step {step}: {detail}")]
    NonFinite { step: usize, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn format(offset: u64, msg: impl Into<String>) -> Self {
        Error::Format {
            offset,
            msg: msg.into(),
        }
    }
}
