//! Numerical laboratory for the Moore–Gibson–Thompson (MGT) equation and the
//! Carleman-weighted iterative reconstruction of its damping coefficient from
//! boundary normal-derivative data.
//!
//! The crate is organized bottom-up:
//!
//! - [`grid`]: uniform space-time grids, stencils and discrete norms;
//! - [`solver`]: Crank–Nicolson forward solver and energy diagnostics;
//! - [`carleman`]: weight geometry, admissibility and the Carleman ratio;
//! - [`observation`]: boundary traces, noise and the `mu` data pair;
//! - [`functional`]: the weighted quadratic functional and its minimizer;
//! - [`reconstruct`]: the fixed-point reconstruction algorithm;
//! - [`experiments`]: stability, Carleman and weight-ratio campaigns.

// `!(x > 0.0)` deliberately rejects NaN; index loops mirror the stencils
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod carleman;
pub mod error;
pub mod experiments;
pub mod functional;
pub mod grid;
pub mod linalg;
pub mod observation;
pub mod reconstruct;
pub mod solver;

pub use error::{Error, Result};
