use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("partial derivatives unavailable and finite differences disabled")]
    PartialsUnavailable,

    #[error("certificate infeasible: {constraint} (value {value:e})")]
    Infeasible { constraint: &'static str, value: f64 },

    #[error("step {step} does not divide the delay {delay}")]
    StepDoesNotDivideDelay { step: f64, delay: f64 },

    #[error("solution escaped at t = {t}: norm {norm:e} exceeds {limit:e}")]
    BlowUp { t: f64, norm: f64, limit: f64 },

    #[error("time {t} outside [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },

    #[error("history grid too coarse: {0} intervals, need at least 4")]
    GridTooCoarse(usize),

    #[error("window at t = {t} leaves the delta-ball: sup norm {norm:e} > {delta:e}")]
    LeavesBall { t: f64, norm: f64, delta: f64 },

    #[error("initial function norm {norm:e} is not inside the certified radius {radius:e}")]
    OutsideRegion { norm: f64, radius: f64 },

    #[error("no feasible candidate within {0} evaluations")]
    NoFeasibleCandidate(usize),

    #[error("{0}")]
    Parse(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
