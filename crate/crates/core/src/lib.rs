//! Dimerized Heisenberg spin-1/2 rings hosting domain-wall ("flying") qubits.

// `!(x > 0.0)` is used on purpose: it rejects NaN along with out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod analytic3;
pub mod basis;
pub mod dynamics;
pub mod eigensolve;
pub mod error;
pub mod experiments;
pub mod hamiltonian;
pub mod profiles;

pub use error::{Error, Result};
