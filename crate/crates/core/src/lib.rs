// Range checks are written as negated comparisons so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agents;
pub mod env;
pub mod error;
pub mod harness;
pub mod ransim;
pub mod traffic;
pub mod transfer;

pub use error::{Error, Result};
