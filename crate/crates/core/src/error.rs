use thiserror::Error;

use crate::model::ValidationReport;

#[derive(Debug, Error)]
pub enum UcError {
    #[error("power {power} MW outside [{p_min}, {p_max}] for unit {unit}")]
    OutOfBounds {
        unit: usize,
        power: f64,
        p_min: f64,
        p_max: f64,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("infeasible dispatch: demand {demand} MW outside committed range [{min_mw}, {max_mw}]")]
    InfeasibleDispatch { demand: f64, min_mw: f64, max_mw: f64 },
    #[error("infeasible action at step {step}")]
    InfeasibleAction { step: usize },
    #[error("no feasible action at step {step}")]
    NoFeasibleAction { step: usize },
    #[error("hour mismatch: {0} vs {1}")]
    HourMismatch(usize, usize),
    #[error("empty value slice at hour {0}")]
    EmptySlice(usize),
    #[error("problem too large for exhaustive method: {0}")]
    TooLarge(String),
    #[error("no feasible plan exists from the initial state")]
    NoFeasiblePlan,
    #[error("parse error: {0}")]
    Parse(String),
    #[error("instance validation failed:\n{0}")]
    Validation(ValidationReport),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, UcError>;
