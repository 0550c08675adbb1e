#![no_std]
// `!(x > 0.0)` style checks are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]
extern crate alloc;

pub mod error;
pub mod evaluation;
pub mod graph;
pub mod homophily;
pub mod model;
pub mod orchestrator;
pub mod pseudolabel;
pub mod selection;
pub mod shift;
pub mod synth;

pub use error::{Error, Result};
