//! Error type shared by all simulation modules.

use thiserror::Error;

/// Errors that can occur while building phantoms, simulating acquisitions
/// or running the calibration pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violates a documented precondition.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Two objects that must share a grid have different shapes.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// An averaging region contains no pixels.
    #[error("empty mask: {0}")]
    EmptyMask(String),

    /// A field contains NaN or infinite values.
    #[error("non-finite values in {0}")]
    NonFinite(String),

    /// The radial-width bisection cannot reach the requested in-plane
    /// standard deviation for the given mask geometry.
    #[error(
        "RIRO calibration failed: target std {target_hz} Hz outside the \
         achievable range [{min_achievable_hz:.6}, {max_achievable_hz:.6}] Hz"
    )]
    Calibration {
        target_hz: f64,
        min_achievable_hz: f64,
        max_achievable_hz: f64,
    },

    /// An index is outside its valid range.
    #[error("index out of range: {0}")]
    OutOfRange(String),

    /// A lookup time falls outside the span of the pressure trace.
    #[error("time {time_s} s outside trace span [{start_s} s, {end_s} s]")]
    OutOfSpan { time_s: f64, start_s: f64, end_s: f64 },

    /// The regression design matrix is singular (e.g. constant pressure).
    #[error("degenerate regression design: {0}")]
    DegenerateDesign(String),

    /// The object sits too close to the image edge to place ghost ROIs.
    #[error("insufficient clearance for ghost masks: {0}")]
    InsufficientClearance(String),

    /// A ratio metric has a zero denominator.
    #[error("zero denominator: {0}")]
    ZeroDenominator(String),
}

pub type Result<T> = std::result::Result<T, Error>;
