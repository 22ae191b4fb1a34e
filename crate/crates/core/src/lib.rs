//! Numerical toolkit for weighted Fourier-Lebesgue spaces.
//!
//! The crate is organised bottom-up:
//!
//! * [`newton`] builds complete Newton polyhedra with exact rational arithmetic.
//! * [`weights`] constructs weight functions and checks their growth conditions by sampling.
//! * [`grid`] holds periodic grids, the DFT pair and weighted norms.
//! * [`pdo`] quantizes symbols and verifies continuity, algebra and ellipticity estimates.
//! * [`microlocal`] builds frequency masks for inhomogeneous neighborhoods and M-cones.
//! * [`propagation`] has the regularity bookkeeping formulas and the worked example.
//! * [`cli`] dispatches JSON descriptors to the library.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod cli;
pub mod error;
pub mod grid;
pub mod microlocal;
pub mod newton;
pub mod numerics;
pub mod pdo;
pub mod propagation;
pub mod weights;

pub use error::{Error, Result};

/// Library version embedded in every report.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
