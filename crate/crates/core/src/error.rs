use thiserror::Error;

/// Errors raised by model construction, propagation and analysis.
#[derive(Debug, Error)]
pub enum Error {
    #[error("particle number must be a positive integer, got {0}")]
    InvalidParticleNumber(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value encountered at t = {time}")]
    NonFinite { time: f64 },

    #[error("step count overflow: {0} steps requested")]
    StepOverflow(f64),

    #[error("trajectory reached the pole (theta = {theta}) at t = {time}")]
    PoleSingularity { theta: f64, time: f64 },

    #[error("jump applied to a state annihilated by the jump operator at t = {time}")]
    DarkStateJump { time: f64 },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("N = {n} exceeds the configured cap of {cap}")]
    MemoryCap { n: usize, cap: usize },

    #[error("degenerate point cloud: {0}")]
    DegenerateCloud(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("eigensolver failure: {0}")]
    Eigen(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
