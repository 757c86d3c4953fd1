//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by state construction, evolution and analysis.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: n = {n}, delta = {delta} ({reason})")]
    InvalidGeometry {
        n: usize,
        delta: usize,
        reason: &'static str,
    },

    #[error("slot {slot} outside [1, {max}]")]
    SlotOutOfRange { slot: usize, max: usize },

    #[error("delay of {tau} slots pushes occupied slot {slot} past the window end {window}")]
    DelayOverflow {
        slot: usize,
        tau: usize,
        window: usize,
    },

    #[error("state is not normalized: |norm^2 - 1| = {deviation:e}")]
    NotNormalized { deviation: f64 },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("empty sweep: at least one slot count is required")]
    EmptySweep,

    #[error("{name} = {value} is not a probability in [0, 1]")]
    InvalidProbability { name: &'static str, value: f64 },

    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { got: usize, need: usize },

    #[error("bit value {0} is not 0 or 1")]
    InvalidBit(u8),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
