//! Damped one-way wave propagation in 2D heterogeneous media.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fullwave;
pub mod gridfile;
pub mod harness;
pub mod jet;
pub mod krylov;
pub mod medium;
pub mod metrics;
pub mod oneway;
pub mod psdo;
pub mod rays;
pub mod symbolcalc;
pub mod symbols;

pub use error::{Error, Result};
