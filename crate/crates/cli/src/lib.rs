//! Command-line front end: experiment configs, presets and the subcommands
//! that write the result tables.

pub mod commands;
pub mod config;
pub mod error;
pub mod metrics;
pub mod output;
pub mod presets;

pub use commands::{cmd_plot_data, cmd_reference, cmd_run, cmd_select_models};
pub use config::ExperimentConfig;
pub use error::{CliError, Result};
