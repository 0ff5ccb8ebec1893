//! Unsupervised deep graph clustering with optimal-transport pseudo labels.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod acot;
pub mod caot;
pub mod cli;
pub mod data;
pub mod encoder;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod ndmath;
pub mod ot;
pub mod trainer;

pub use error::{Error, Result};
