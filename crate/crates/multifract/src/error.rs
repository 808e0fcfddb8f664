//! Crate-wide error type.
//!
//! Numeric routines here are mostly total functions; errors are reserved for
//! genuinely invalid inputs (weights outside `(0,1)`, empty grids, …),
//! exhausted search budgets, and structural failures of the synthesis
//! pipeline (singular interpolation systems, targets that stopped nesting).

use thiserror::Error;

/// Everything that can go wrong in the library.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A weight was outside the open interval `(0,1)` (or not finite).
    #[error("weight {value} is not in the open interval (0,1)")]
    InvalidWeight { value: f64 },

    /// A convex coefficient was outside `(0,1]` (or not finite).
    #[error("coefficient {value} is not in (0,1]")]
    InvalidCoefficient { value: f64 },

    /// Convex coefficients must sum to 1 within the stated tolerance.
    #[error("coefficients sum to {sum}, which differs from 1 by more than {tolerance}")]
    CoefficientSum { sum: f64, tolerance: f64 },

    /// A list that must be non-empty (weights, components, curves…) was empty.
    #[error("{what} must be non-empty")]
    Empty { what: &'static str },

    /// The whole-space cylinder has no depth to normalise by.
    #[error("the empty cylinder has no local exponent (depth 0)")]
    EmptyPath,

    /// Exhaustive enumeration was asked to go deeper than the configured cap.
    #[error("enumeration depth {requested} exceeds the budget cap {cap}")]
    DepthBudget { requested: u32, cap: u32 },

    /// A grid of abscissas must be non-empty and strictly increasing.
    #[error("grid is not strictly increasing at index {index}")]
    UnsortedGrid { index: usize },

    /// A depth schedule must be non-empty and strictly increasing.
    #[error("depth schedule is not strictly increasing at index {index}")]
    UnsortedSchedule { index: usize },

    /// Block lengths must be positive.
    #[error("block rule produced an empty block at index {index}")]
    EmptyBlock { index: usize },

    /// A bracketing search found no sign change over the supplied interval.
    #[error("no sign change of {what} over [{lo}, {hi}]")]
    NoSignChange { what: &'static str, lo: f64, hi: f64 },

    /// The 3×3 interpolation system is numerically singular.
    #[error("interpolation system is singular (determinant {determinant:e})")]
    SingularSystem { determinant: f64 },

    /// The interpolation system solved, but not with positive coefficients.
    #[error(
        "interpolation system solution is not strictly positive: \
         ({l1:.6e}, {l2:.6e}, {l3:.6e})"
    )]
    NonPositiveSolution { l1: f64, l2: f64, l3: f64 },

    /// A solved combination failed its residual check.
    #[error("residual {residual:e} exceeds tolerance {tolerance:e} for {what}")]
    ResidualTooLarge {
        what: &'static str,
        residual: f64,
        tolerance: f64,
    },

    /// Slopes that must differ at a matched point were too close to call.
    #[error("slope gap {gap:e} at q = {q} is below the threshold {threshold:e}")]
    SlopeGapTooSmall { q: f64, gap: f64, threshold: f64 },

    /// A curve comparison was too close to zero to classify either way.
    #[error("stage {stage}: sign of the new branch at q = {q} is ambiguous ({value:e})")]
    AmbiguousCase { stage: usize, q: f64, value: f64 },

    /// Construction targets must interleave as a strictly nested family.
    #[error("targets are not strictly nested: {detail}")]
    TargetNesting { detail: String },

    /// A synthesis stage could not be completed.
    #[error("construction stage {stage} failed: {reason}")]
    StageFailure { stage: usize, reason: String },

    /// Kink detection saw more than one ownership change inside one grid cell.
    #[error("grid too coarse: multiple crossings inside cell [{lo}, {hi}]")]
    GridTooCoarse { lo: f64, hi: f64 },

    /// Two curves coincided away from their designated matching points.
    #[error("curves coincide unexpectedly near q = {q}")]
    UnexpectedCrossing { q: f64 },

    /// Parameters for the split/synthesis step were out of their domain.
    #[error("invalid construction parameter: {detail}")]
    InvalidParameter { detail: String },
}
