//! Experiment driver behind the `chordgram` binary: corpus preparation,
//! training, grid sweeps, structure analysis and generation.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analyze;
pub mod config;
pub mod data;
pub mod generate;
pub mod sweep;
pub mod train;

pub use config::ExperimentConfig;
pub use train::{Cell, ResultRow};
