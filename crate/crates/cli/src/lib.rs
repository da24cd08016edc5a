//! Configuration parsing and experiment runner behind the `bkap` binary.

pub mod config;
pub mod runner;

pub use config::{emit_config, parse_config_file, parse_config_str, resolve, ConfigError, Experiment, RunConfig};
pub use runner::{run, RunError, RunReport};
