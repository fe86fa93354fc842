//! Numerical laboratory for double solitons of the mKdV equation with a
//! slowly varying external potential.

// `!(x > 0.0)` is used on purpose so that NaN fails validation, and the
// field kernels index several arrays in lockstep.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod effective;
pub mod error;
pub mod grid;
pub mod functionals;
pub mod io;
pub mod jet;
pub mod operator;
pub mod potential;
pub mod solver;
pub mod soliton;
pub mod tracker;

pub use error::{Error, Result};
pub use grid::LineGrid;
pub use soliton::SolitonParams;

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
