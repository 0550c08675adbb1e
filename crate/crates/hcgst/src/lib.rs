//! Graph directory IO, checkpoints, report files and the experiment runner
//! around [`hcgst_core`].

pub mod checkpoint;
pub mod error;
pub mod experiment;
pub mod io;
pub mod report;

pub use error::{Error, Result};
pub use hcgst_core as core;
