//! Weighted Bergman kernels, extension indices and curvature diagnostics on
//! holomorphic cylinders in one and two complex dimensions.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bergman;
pub mod bundle;
pub mod classify;
pub mod cli;
pub mod error;
pub mod extrapolate;
pub mod geometry;
pub mod linalg;
pub mod lp_iter;
pub mod weights;

pub use error::{Error, Result};
pub use linalg::C64;
