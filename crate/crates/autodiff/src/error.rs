use thiserror::Error;

use crate::tensor::Shape;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("degenerate linear system at batch index {batch_index} (condition estimate {cond:e})")]
    Degenerate { batch_index: usize, cond: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TapeError {
    #[error("backward needs a scalar output, got shape {0}")]
    NonScalar(Shape),
    #[error("variable belongs to a different tape")]
    Detached,
    #[error(transparent)]
    Solve(#[from] SolveError),
}

#[derive(Debug, Error)]
pub enum ParamError {
    #[error("parameter `{0}` already exists")]
    Duplicate(String),
    #[error("unknown parameter `{0}`")]
    Unknown(String),
    #[error("parameter `{name}` has shape {expected}, got {got}")]
    ShapeMismatch { name: String, expected: Shape, got: Shape },
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint format version {0}")]
    Version(u32),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Param(#[from] ParamError),
}
