use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("subtrahend interval is not centered at the origin (max |lower + upper| = {asymmetry:e})")]
    NotOriginCentered { asymmetry: f64 },

    #[error("model singularity: {0}")]
    Singularity(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("QP solve failed: {0}")]
    Qp(#[from] crate::qp::QpError),

    #[error("no valid initial reference trajectory found after {iterations} iterations")]
    NoValidInitialTrajectory { iterations: usize },

    #[error("time step {step} outside the controllable range 0..{horizon}")]
    StepOutOfRange { step: usize, horizon: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
