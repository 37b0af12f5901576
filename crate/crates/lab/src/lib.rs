//! Experiments, config files, output formats and the `condlab` command line
//! on top of `condlab-core`.

pub mod cli;
pub mod config;
pub mod envspec;
pub mod error;
pub mod experiments;
pub mod io;
pub mod pool;

pub use error::{ConfigError, LabError, Result};
