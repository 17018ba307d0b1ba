//! Recycled majorization-minimization generalized Krylov solvers with joint
//! estimation of forward-operator geometry parameters.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, phantoms,
//! noise and the command line live in the companion `nlgks` crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod diagnostics;
pub mod dynamic;
pub mod error;
pub mod linalg;
pub mod math;
pub mod mmgks;
pub mod nonlinear;
pub mod operators;
pub mod recycling;
pub mod streaming;

pub use diagnostics::Diagnostics;
pub use error::{Error, Result};
