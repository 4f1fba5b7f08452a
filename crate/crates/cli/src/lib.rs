//! Library half of the `segfuse` command-line tool.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod synth;

pub use commands::{evaluate, fuse, pipeline, write_fuse, write_pipeline};
pub use config::{ConfigError, PipelineConfig};
pub use synth::{generate, SynthConfig};
