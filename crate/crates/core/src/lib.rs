//! Numerical core for quantum-clock event-time analysis.
//!
//! The library builds discrete history states over a finite time window:
//! a system trajectory |ψ(t_j)⟩ is attached to N uniformly spaced clock
//! ticks with weight 1/√N, and event-time statistics (time of arrival,
//! dwell time, event-time moments) are obtained by Born-rule conditioning
//! on an event projector. Independent oracle routes — explicit
//! tensor-product Born-rule evaluation, closed-form free-Gaussian
//! evolution, and probability-current (flux) arrival distributions —
//! cross-check the main path.
//!
//! Modules:
//! - [`clock`]: the finite time window, its conjugate frequency ladder,
//!   the unitary transform between them, and the constraint-equation
//!   residual diagnostic.
//! - [`dynamics`]: system states (position-grid wavefunctions and finite
//!   vectors), Hamiltonians, and unitary propagation.
//! - [`eventtime`]: arrival POVM, joint/conditional event-time
//!   distributions, dwell time, and event-time moments.
//! - [`history`]: explicit tensor-product history states, measurement and
//!   preparation histories with memory registers, branch ensembles, and
//!   the two-clock reduction check.
//! - [`oracles`]: independent reference computations used for
//!   verification.

pub mod clock;
pub mod dynamics;
pub mod eventtime;
pub mod history;
pub mod oracles;

pub use num_complex::Complex64;

/// Errors shared across the library.
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("event never occurs in the window: joint mass {mass:.3e} below threshold {threshold:.3e}")]
    NeverOccurs { mass: f64, threshold: f64 },
    #[error("propagation instability at tick {tick}: norm drift {drift:.3e} exceeds {limit:.3e}")]
    PropagationInstability { tick: usize, drift: f64, limit: f64 },
    #[error("instance too large: {0}")]
    SizeGuard(String),
    #[error("probability current vanishes at every tick; no flux distribution")]
    NoFlux,
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn mismatch(msg: impl Into<String>) -> Error {
    Error::DimensionMismatch(msg.into())
}
