use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failures of the binary containers. Each variant maps to a stable code.
#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },
    #[error("unsupported container version {0}")]
    Version(u32),
    #[error("corrupt container: {0}")]
    Corrupt(String),
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("non-finite value in payload at offset {0}")]
    NonFinite(usize),
}

impl ContainerError {
    pub fn code(&self) -> &'static str {
        match self {
            ContainerError::BadMagic { .. } => "bad_magic",
            ContainerError::Version(_) => "version_mismatch",
            ContainerError::Corrupt(_) => "corrupt_container",
            ContainerError::Dimension(_) => "dimension_error",
            ContainerError::NonFinite(_) => "non_finite_payload",
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("need at least {needed} snapshots, got {got}")]
    TooFewSnapshots { needed: usize, got: usize },
    #[error("rank {r} out of range 1..={max}")]
    RankOutOfRange { r: usize, max: usize },
    #[error("degenerate data: {0}")]
    Degenerate(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("index {0} is masked or outside the grid")]
    BadIndex(usize),
    #[error("non-finite state in estimator")]
    NonFiniteState,
    #[error("all correlation windows invalid")]
    AllVectorsInvalid,
    #[error("zero-norm reference")]
    ZeroReference,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("image source exhausted")]
    SourceExhausted,
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Container(#[from] ContainerError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Machine-readable error code, used by the CLI's JSON error output.
    pub fn code(&self) -> &'static str {
        match self {
            Error::GridMismatch(_) => "grid_mismatch",
            Error::TooFewSnapshots { .. } => "too_few_snapshots",
            Error::RankOutOfRange { .. } => "rank_out_of_range",
            Error::Degenerate(_) => "degenerate_data",
            Error::Dimension(_) => "dimension_mismatch",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::BadIndex(_) => "bad_index",
            Error::NonFiniteState => "non_finite_state",
            Error::AllVectorsInvalid => "all_vectors_invalid",
            Error::ZeroReference => "zero_reference",
            Error::InsufficientData(_) => "insufficient_data",
            Error::SourceExhausted => "source_exhausted",
            Error::Config(_) => "invalid_config",
            Error::Container(e) => e.code(),
            Error::Io(_) => "io_error",
        }
    }
}
