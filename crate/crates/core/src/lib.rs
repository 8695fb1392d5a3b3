// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod harness;
pub mod liegroup;
pub mod models;
pub mod objective;
pub mod sac;
pub mod sto;

pub use error::{Error, Result};
