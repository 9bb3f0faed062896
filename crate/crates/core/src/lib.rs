//! Truncated marginal neural ratio estimation.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod neural;
pub mod oracle;
pub mod posterior;
pub mod prior;
pub mod ratio;
pub mod seed;
pub mod simulator;
pub mod store;
pub mod truncation;

pub use error::{Error, Result};
