use cartmech_autodiff::{CheckpointError, ParamError, SolveError, TapeError};
use cartmech_core::CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Tape(#[from] TapeError),
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("dataset error: {0}")]
    Data(String),
    #[error("dataset format version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("training aborted after {0} consecutive non-finite steps")]
    Diverged(usize),
    #[error("length mismatch: {0}")]
    Length(String),
}

impl From<SolveError> for LearnError {
    fn from(e: SolveError) -> Self {
        LearnError::Core(CoreError::from(e))
    }
}

impl LearnError {
    /// Numerical failures as opposed to user or file errors.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            LearnError::Core(
                CoreError::Degenerate(_)
                    | CoreError::Singularity(_)
                    | CoreError::Integration { .. }
                    | CoreError::GimbalLock(_)
            ) | LearnError::Tape(TapeError::Solve(_))
                | LearnError::Diverged(_)
        )
    }
}

pub type Result<T, E = LearnError> = std::result::Result<T, E>;
