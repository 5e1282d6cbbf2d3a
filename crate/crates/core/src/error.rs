use thiserror::Error;

use crate::chain::Model;

/// Errors raised by the spin-chain sensitivity toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid chain specification: {0}")]
    InvalidSpec(String),

    #[error("mode index {l} outside [-{half}, {max}] for N = {n}", half = n / 2, max = n / 2 - 1)]
    ModeIndex { l: i64, n: usize },

    #[error("operation requires the {expected:?} model, got {found:?}")]
    ModelMismatch { expected: Model, found: Model },

    #[error("outside the domain of the approximation: {0}")]
    Domain(String),

    #[error("dense oracle limited to N <= {max} spins, requested N = {requested}")]
    Resource { requested: usize, max: usize },

    #[error("dimension mismatch: state has dim {state}, observable has dim {observable}")]
    DimensionMismatch { state: usize, observable: usize },

    #[error("finite-difference derivative did not settle: {0}")]
    Derivative(String),

    #[error("invalid sweep: {0}")]
    Sweep(String),

    #[error("invalid protocol configuration: {0}")]
    Protocol(String),

    #[error("record format: {0}")]
    Format(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
