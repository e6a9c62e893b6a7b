//! Command-line driver: configuration, dispatch and output.

pub mod config;
pub mod error;
pub mod runner;

pub use config::{parse_config, RunConfig, SweepAxis, Task};
pub use error::{CliError, CliResult};
