//! Crate-wide error type.

use alloc::string::String;
use core::fmt;

/// Errors produced by series handling, scoring, clustering, and training.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An operation received no data at all.
    EmptyInput(&'static str),
    /// Raw samples were not in non-decreasing time order.
    NonMonotoneTimestamps { index: usize },
    /// Every sample of the input is masked invalid.
    AllInvalid(&'static str),
    /// Two series that must share a time index do not.
    IndexMismatch,
    /// Window length does not leave room for a target.
    WindowTooLong { tau: usize, len: usize },
    /// An appliance has too few valid samples for the requested statistic.
    TooFewValidSamples {
        appliance: String,
        have: usize,
        need: usize,
    },
    /// Periodicity scoring needs at least two full days of data.
    TooFewDays { full_days: usize },
    /// A usage vector cannot be formed: the series never leaves the idle state.
    NoActiveState { appliance: String },
    /// Vector lengths differ where they must agree.
    LengthMismatch { left: usize, right: usize },
    /// Requested lag is too large for the series length.
    LagTooLarge { delta: usize, len: usize },
    /// Signal is shorter than the transform requires.
    SignalTooShort { len: usize, min: usize },
    /// A value that must be finite is NaN or infinite.
    NonFinite { what: &'static str, index: usize },
    /// Tensor or vector shapes are incompatible.
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    /// Not enough valid history before the requested position.
    InsufficientHistory { have: usize, need: usize },
    /// The critical set came out empty; the caller should lower sigma.
    NoCriticalAppliances,
    /// Training loss became non-finite.
    NonFiniteLoss { stage: &'static str, epoch: usize },
    /// A configuration value is out of its permitted range.
    InvalidConfig(String),
    /// A slice or alignment request produced an empty range.
    EmptyRange,
    /// Checkpoint state refers to a parameter block that does not exist.
    UnknownParameter(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::EmptyInput(what) => write!(f, "empty input: {what}"),
            Error::NonMonotoneTimestamps { index } => {
                write!(f, "timestamps decrease at index {index}")
            }
            Error::AllInvalid(what) => write!(f, "all samples invalid: {what}"),
            Error::IndexMismatch => write!(f, "series do not share a time index"),
            Error::WindowTooLong { tau, len } => {
                write!(
                    f,
                    "window length {tau} leaves no target in a series of length {len}"
                )
            }
            Error::TooFewValidSamples {
                appliance,
                have,
                need,
            } => {
                write!(
                    f,
                    "appliance '{appliance}' has {have} valid samples, needs {need}"
                )
            }
            Error::TooFewDays { full_days } => {
                write!(f, "periodicity needs at least 2 full days, got {full_days}")
            }
            Error::NoActiveState { appliance } => {
                write!(
                    f,
                    "appliance '{appliance}' has no active state (all zero or invalid)"
                )
            }
            Error::LengthMismatch { left, right } => {
                write!(f, "length mismatch: {left} vs {right}")
            }
            Error::LagTooLarge { delta, len } => {
                write!(f, "lag {delta} too large for series of length {len}")
            }
            Error::SignalTooShort { len, min } => {
                write!(f, "signal length {len} below minimum {min}")
            }
            Error::NonFinite { what, index } => {
                write!(f, "non-finite value in {what} at index {index}")
            }
            Error::ShapeMismatch { expected, got } => {
                write!(
                    f,
                    "shape mismatch: expected {}x{}, got {}x{}",
                    expected.0, expected.1, got.0, got.1
                )
            }
            Error::InsufficientHistory { have, need } => {
                write!(f, "insufficient valid history: have {have}, need {need}")
            }
            Error::NoCriticalAppliances => {
                write!(
                    f,
                    "no critical appliances selected; lower sigma or sigma_rel"
                )
            }
            Error::NonFiniteLoss { stage, epoch } => {
                write!(f, "non-finite loss during {stage} at epoch {epoch}")
            }
            Error::InvalidConfig(msg) => write!(f, "invalid config: {msg}"),
            Error::EmptyRange => write!(f, "requested range is empty"),
            Error::UnknownParameter(name) => write!(f, "unknown parameter block '{name}'"),
        }
    }
}
