//! Library side of the `gsl` command: configuration and subcommands.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{cmd_eval, cmd_export_graph, cmd_sweep, cmd_train, cmd_viz};
pub use config::{DatasetKind, GraphKind, RunConfig};
pub use error::CliError;
