// Negated float comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod container;
pub mod corpus;
pub mod dae;
pub mod error;
pub mod eval;
pub mod gmm;
pub mod mapper;
pub mod nn;
pub mod pipeline;
pub mod prosody;

mod fsutil;
mod wire;

pub use error::{Error, Result};
