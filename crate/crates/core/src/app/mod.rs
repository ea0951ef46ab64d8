//! Configuration files and the subcommands built on them.

mod commands;
mod config;

pub use commands::{run, Command, Report, RESOLVED_CONFIG};
pub use config::{RunConfig, PATH_KEYS};
