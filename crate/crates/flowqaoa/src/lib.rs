//! Classical simulation and benchmarking of constraint-preserving QAOA on
//! network-flow problems.
//!
//! The crate covers the full pipeline: planar flow networks with an explicit
//! face basis ([`graph`]), configuration bases and state vectors ([`hilbert`]),
//! cost and mixer operators ([`operators`]), Krylov time evolution
//! ([`dynamics`]), initial-state preparation diagnostics ([`prep`]),
//! derivative-free and quasi-Newton parameter optimization ([`optim`]),
//! QAOA runs and mixer benchmarks ([`qaoa`]), height-field duality transforms
//! ([`duality`]), and the command-line experiment drivers ([`cli`]).

// index loops mirror the matrix subscripts in the numeric kernels
#![allow(clippy::needless_range_loop)]

pub mod cli;
pub mod duality;
pub mod dynamics;
pub mod error;
pub mod graph;
pub mod hilbert;
pub mod operators;
pub mod optim;
pub mod prep;
pub mod qaoa;

pub use error::{Error, Result};
