//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong while building kernels, solving for
/// distributions, or running simulations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("kernel matrix must be square and nonempty, got {rows} rows with row {bad_row} of length {bad_len}")]
    NotSquare {
        rows: usize,
        bad_row: usize,
        bad_len: usize,
    },

    #[error("entry ({x},{y}) = {value} is not a probability in [0,1]")]
    EntryOutOfRange { x: usize, y: usize, value: f64 },

    #[error("row {row} sums to {sum}, exceeding 1 beyond tolerance")]
    RowSumExceedsOne { row: usize, sum: f64 },

    #[error("state index {state} out of range for {n_states} states")]
    StateOutOfRange { state: usize, n_states: usize },

    #[error("weights do not form a probability vector (sum = {sum}, min = {min})")]
    NotADistribution { sum: f64, min: f64 },

    #[error("power iteration did not converge after {max_iter} iterations (residual {residual:e})")]
    NoConvergence { max_iter: u64, residual: f64 },

    #[error("transition ({x},{y}) has zero probability under the regenerated kernel")]
    ZeroProbabilityTransition { x: usize, y: usize },

    #[error("reduced Bellman system is singular (pivot {pivot:e} at column {col})")]
    SingularSystem { col: usize, pivot: f64 },

    #[error("episode exceeded {guard} steps without absorption; the chain is effectively non-absorbing from this start (consider an episode cap)")]
    RunawayEpisode { guard: u64 },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("need at least {needed} points in the fit window, found {found}")]
    InsufficientPoints { needed: usize, found: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
