use cartmech_autodiff::SolveError;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoreError {
    #[error("parameter out of domain: {0}")]
    ParamDomain(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid topology: {0}")]
    Topology(String),
    #[error("degenerate configuration: {0}")]
    Degenerate(#[from] SolveError),
    #[error("singular potential: {0}")]
    Singularity(String),
    #[error("integration failed at step {step} (t = {t}): {reason}")]
    Integration { step: usize, t: f64, reason: String },
    #[error("gimbal lock: sin(theta) = {0:e}")]
    GimbalLock(f64),
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T, E = CoreError> = std::result::Result<T, E>;
