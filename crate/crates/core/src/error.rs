use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error(
        "channel too noisy: delay distribution still has {residual:e} unresolved mass after {cap} attempts"
    )]
    ChannelTooNoisy { cap: usize, residual: f64 },

    #[error("success probabilities cover indices 0..{available}, but index {needed} is required")]
    InsufficientSuccessProbs { needed: usize, available: usize },

    #[error("delay distribution mass is not conserved: |sum(pmf) + truncated - 1| = {defect:e}")]
    MassNotConserved { defect: f64 },

    #[error("penalty level {lambda} is not reachable by any finite wait (supremum {supremum})")]
    UnreachablePenalty { lambda: f64, supremum: f64 },

    #[error("custom penalty is not nondecreasing: g({left}) = {g_left} > g({right}) = {g_right}")]
    NonMonotonePenalty { left: f64, right: f64, g_left: f64, g_right: f64 },

    #[error("bisection bracket [{lo}, {hi}] does not contain a root (p(lo) = {p_lo}, p(hi) = {p_hi})")]
    BracketFailure { lo: f64, hi: f64, p_lo: f64, p_hi: f64 },

    #[error("simulation horizon {horizon} is shorter than one epoch ({min_epoch})")]
    HorizonTooShort { horizon: f64, min_epoch: f64 },

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name, reason: reason.into() }
}

/// Rejects non-finite or non-positive values.
pub(crate) fn require_positive(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(invalid(name, format!("must be finite and > 0, got {value}")))
    }
}

pub(crate) fn require_nonnegative(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && value >= 0.0 {
        Ok(value)
    } else {
        Err(invalid(name, format!("must be finite and >= 0, got {value}")))
    }
}
