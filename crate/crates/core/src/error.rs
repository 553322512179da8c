use thiserror::Error;

use crate::time::Picos;

/// A model or controller parameter is outside its valid domain.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("parameter `{name}` = {value} is invalid: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("parameter `{0}` is required in this mode")]
    MissingParameter(&'static str),
    #[error("gate width {gate_width} s does not fit in the trigger period {period} s")]
    GateTooWide { gate_width: f64, period: f64 },
    #[error("bias ordering violated: need v_ref ({v_ref}) < v_breakdown ({v_breakdown}) < v_on ({v_on})")]
    BiasOrdering { v_ref: f64, v_breakdown: f64, v_on: f64 },
    #[error("sweep axis must be strictly increasing")]
    SweepNotIncreasing,
    #[error("bias {0} V is not above breakdown")]
    BiasBelowBreakdown(f64),
    #[error("failed to parse parameter file: {0}")]
    Parse(String),
}

/// Programming error inside the event loop; never a model outcome.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineFault {
    #[error("event at {event} precedes current time {now}")]
    OutOfOrder { now: Picos, event: Picos },
    #[error("generator {generator} went backwards: {prev} then {next}")]
    NonMonotoneGenerator { generator: usize, prev: Picos, next: Picos },
    #[error("free-running re-arm requested in phase {0}")]
    RearmOutsideDead(&'static str),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimatorError {
    #[error("dead-time correction saturates: rate {rate} /s with dead-time {dead_time} s gives rate*dead_time = {product} >= 1")]
    Saturated { rate: f64, dead_time: f64, product: f64 },
    #[error("photon rate must be positive, got {0}")]
    NonPositivePhotonRate(f64),
    #[error("event log has no records")]
    EmptyLog,
    #[error("need at least 3 dead-time points, got {0}")]
    TooFewPoints(usize),
    #[error("sweep axis is not dead-time")]
    WrongAxis,
    #[error("no noise plateau found at the long dead-time end of the curve")]
    NoPlateau,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Engine(#[from] EngineFault),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
}
