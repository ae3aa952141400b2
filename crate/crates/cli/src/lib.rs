//! Configuration, run execution and export for the `msopt` binary.

pub mod config;
pub mod projection;
pub mod run;

pub use config::{parse_config, parse_flags, CliConfig, ConfigError, ObjectiveSpec};
pub use projection::{export_projections, PlaneSpec};
pub use run::{run_command, Summary};
