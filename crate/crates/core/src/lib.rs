//! Gaussian process propensity models for daily customer spending.
// `!(x > 0.0)` style checks reject NaN on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benchmarks;
pub mod error;
pub mod gp;
pub mod inference;
pub mod io;
pub mod kernels;
pub mod linalg;
pub mod model;
pub mod par;
pub mod predict;
pub mod simulate;
pub mod stats;

pub use error::{GppmError, Result};
