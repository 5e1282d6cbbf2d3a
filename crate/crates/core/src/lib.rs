//! Sensitivities of thermal XX and XY spin chains used as magnetometers.
//!
//! The fast path solves the chains as free fermions; [`oracle`] diagonalises
//! the full Hamiltonian for small chains and is used to cross-check it.

pub mod chain;
pub mod diff;
mod ensemble;
pub mod error;
pub mod estimator;
pub mod oracle;
pub mod protocol;
pub mod records;
pub mod thermo;
pub mod validation;

pub use chain::{ChainSpec, Model};
pub use error::{Error, Result};
