//! Command-line driver for `monoride`: JSON experiment configs, CSV
//! trajectories and SVG charts.

pub mod chart;
pub mod commands;
pub mod config;

pub use commands::{run, Cli, CliError, Command};
pub use config::{load_config, parse_config, save_config, ConfigError, ExperimentConfig};
