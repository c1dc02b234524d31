//! MNIST ingestion, checkpoints and the training driver built on `htnet-core`.

pub mod bench;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dataset;
mod error;
pub mod mnist;
pub mod train;

pub use error::{Error, Result};
pub use htnet_core as core;
