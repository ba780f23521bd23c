// `!(x > 0.0)` is the NaN-rejecting form used throughout validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod charfun;
pub mod cli;
pub mod collision;
pub mod error;
pub mod kernels;
pub mod levy;
pub mod quadrature;
pub mod solver;

pub use error::{Error, Result};
