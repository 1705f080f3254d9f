//! Command-line harness around `adabatch-core`: config files, dataset
//! loaders, run/sweep/audit/gen-data commands and their output files.

pub mod audit;
pub mod commands;
pub mod config;
pub mod failure;
pub mod output;
pub mod setup;

pub use config::{Config, ConfigError};
pub use failure::Failure;
