use thiserror::Error;

/// Errors raised by lattice construction and the solvers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("time grid needs at least one step and a positive finite horizon (steps = {steps}, horizon = {horizon})")]
    InvalidGrid { steps: usize, horizon: f64 },

    #[error("depth {steps} exceeds the configured cap of {cap}")]
    DepthCapExceeded { steps: usize, cap: usize },

    #[error("volatility {value} at step {step} is below the lower bound {floor}")]
    NonPositiveVolatility { value: f64, step: usize, floor: f64 },

    #[error("drift {lambda} with sqrt(dt) = {sqrt_dt} gives an invalid transition probability")]
    InfeasibleTilt { lambda: f64, sqrt_dt: f64 },

    #[error("instance has {size} decision variables, enumeration cap is {cap}")]
    InstanceTooLarge { size: usize, cap: usize },

    #[error("beta must lie in (0, 1), got {0}")]
    InvalidBeta(f64),

    #[error("Lipschitz constant in y ({lipschitz_y}) times dt ({dt}) must be < 1")]
    ContractionViolated { lipschitz_y: f64, dt: f64 },

    #[error("fixed-point iteration did not converge at step {step}, node {index}")]
    PicardDiverged { step: usize, index: usize },

    #[error("unknown spec: {0}")]
    UnknownSpec(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

pub type Result<T> = std::result::Result<T, LabError>;
