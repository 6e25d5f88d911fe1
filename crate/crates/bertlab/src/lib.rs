//! File formats, checkpoints, logs and the experiment runner built on
//! `bertlab-core`.

pub mod checkpoint;
pub mod error;
pub mod experiment;
pub mod formats;
pub mod logs;

pub use error::{Error, Result};
