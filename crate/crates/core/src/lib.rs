//! Security analysis of Gaussian-modulated continuous-variable QKD with squeezed or
//! coherent states: covariance-matrix Gaussian algebra, entanglement-based protocol
//! models, finite-size key rates, calibration, and a symbol-level Monte Carlo.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Index loops mirror the matrix algebra of the moment updates.
#![allow(clippy::needless_range_loop)]

pub mod calibration;
pub mod error;
pub mod finite_size;
pub mod frame;
pub mod gaussian;
pub mod moments;
pub mod protocol;
pub mod simulation;

pub use error::{Error, Result};
