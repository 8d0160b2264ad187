//! Configuration, persistence and experiment harness behind the `lsf` binary.

pub mod cache;
pub mod commands;
pub mod config;
pub mod error;
pub mod experiments;
pub mod output;

pub use config::RunConfig;
pub use error::{CliError, CliResult, ExitClass};
