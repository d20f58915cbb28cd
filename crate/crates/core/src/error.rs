use thiserror::Error;

/// Errors raised by the modelling and solver layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("atoms {0} and {1} share the same position")]
    DuplicatePosition(usize, usize),

    #[error("coincident atoms: the pair coupling is singular at zero separation")]
    CoincidentAtoms,

    #[error("{what} must be a unit vector (norm {norm})")]
    NotUnit { what: &'static str, norm: f64 },

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("invalid subset: {0}")]
    InvalidSubset(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("linear system is singular or ill-conditioned (condition estimate {condition:.3e}) at detuning {delta}")]
    ResonantSingularity { delta: f64, condition: f64 },

    #[error("iterative solve did not converge after {iterations} iterations (residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("exact oracle is capped at {cap} atoms, got {n}")]
    CapExceeded { n: usize, cap: usize },

    #[error("integration failed: {0}")]
    Integration(String),
}

pub type Result<T> = std::result::Result<T, Error>;
