use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("integration failed at t = {t}: step size {h:e} underflowed")]
    IntegrationFailure { t: f64, h: f64 },

    #[error("step budget of {max_steps} exhausted at t = {t}")]
    StepBudget { t: f64, max_steps: usize },

    #[error("pump is not above threshold (fbar/f_th = {ratio}); the periodic integral diverges")]
    BelowThreshold { ratio: f64 },

    #[error("quadrature failed: {0}")]
    TruncationFailure(String),

    #[error("no periodic convergence after {periods} periods (last change {last_change:e})")]
    NoConvergence { periods: usize, last_change: f64 },

    #[error("ODE and quadrature routes disagree: relative deviation {deviation:e} at t = {t}")]
    CrossCheck { t: f64, deviation: f64 },

    #[error("trajectory diverged at t = {t}")]
    Divergence { t: f64 },

    #[error("{discarded} of {n_traj} trajectories diverged, above the allowed budget")]
    DivergenceBudget { discarded: usize, n_traj: usize },

    #[error("Fock truncation unhealthy: tail population {tail:e} with n_max = {n_max}")]
    TruncationHealth { tail: f64, n_max: usize },

    #[error("Hilbert space dimension {dim} exceeds budget {budget}")]
    DimensionOverflow { dim: usize, budget: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
}
