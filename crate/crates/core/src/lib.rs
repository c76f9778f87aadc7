//! Design, simulation and surrogate modelling of low-porosity tubule
//! structures under dynamic transverse compression.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod error;
pub mod explorer;
pub mod fesolver;
pub mod geometry;
pub mod io;
pub mod pipeline;
pub mod surrogate;

pub use error::{Error, Result};
