//! Error types shared across the crate.

use thiserror::Error;

/// Errors raised by simulation, estimation, learning, and persistence.
#[derive(Debug, Error)]
pub enum CoreError {
    /// A dynamics step produced a non-finite value (parameter blow-up).
    #[error("non-finite result in dynamics step: {0}")]
    NonFinite(String),

    /// Comfort-model fixed point failed to converge.
    #[error("PMV iteration did not converge after {0} iterations")]
    NonConvergence(usize),

    /// Input outside the supported physical range.
    #[error("input out of range: {0}")]
    OutOfRange(String),

    /// Estimation was asked to run on an empty dataset.
    #[error("no data: {0}")]
    EmptyData(String),

    /// Data does not match the configured level grids.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// A policy row has no probability mass left.
    #[error("dead state: all actions carry zero weight at stage {stage}, state {state}")]
    DeadState { stage: usize, state: u32 },

    /// No action keeps the comfort constraint satisfiable at a visited state.
    #[error("infeasible: no comfortable action at stage {stage}, state {state}")]
    Infeasible { stage: usize, state: u32 },

    /// Every attempted rollout came back infeasible.
    #[error("no feasible sample paths ({attempts} attempts for {wanted} paths)")]
    NoPaths { wanted: usize, attempts: usize },

    /// Problem too large for exact enumeration.
    #[error("problem too large for exact solve: {0}")]
    TooLarge(String),

    /// Persisted artifact carries an incompatible header.
    #[error("version mismatch: {0}")]
    VersionMismatch(String),

    /// Persisted artifact is truncated or malformed.
    #[error("corrupt file: {0}")]
    Corrupt(String),

    /// Configuration failed validation.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;
