//! Command-line front end: run configuration, parameter files and the
//! `generate` / `train` / `eval` / `ablate` commands.

pub mod blob;
pub mod commands;
pub mod config;

pub use config::{parse_config, DataSource, RunConfig, SbmSpec, Setting};
