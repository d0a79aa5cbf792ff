//! Complexified-trajectory propagation of coherent states: boundary-value
//! shooting, the semiclassical propagator, and the semiclassical purity of a
//! two-mode reduced state, with exact Fock-space references.

pub mod config;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod hamiltonian;
pub mod linalg;
pub mod oracle;
pub mod output;
pub mod propagator;
pub mod purity;
pub mod quadrature;
pub mod shooting;
pub mod suite;

pub use error::{Error, Result};
