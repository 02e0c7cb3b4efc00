//! Command-line front end: JSON configuration, the six subcommands and their output formats.

// negated comparisons reject NaN on purpose
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{run, CliError, Command};
pub use config::{ConfigError, RunConfig};
pub use output::OutputFormat;

/// Environment variable capping the worker threads.
pub const THREADS_ENV: &str = "DRPHASE_THREADS";
