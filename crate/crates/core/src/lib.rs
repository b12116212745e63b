// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod cli;
pub mod design;
pub mod detection;
pub mod error;
pub mod montecarlo;
pub mod output;
pub mod specfun;

pub use error::{Error, Result};
pub use specfun::{Probability, Tolerance};
