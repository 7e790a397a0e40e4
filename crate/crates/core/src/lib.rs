// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod association;
pub mod commands;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod kinematics;
pub mod learning;
pub mod perception;
pub mod seeds;
mod textfmt;
pub mod vae;

pub use error::{Error, Result};
