//! Experiment harness: configuration, shot sources, metrics and the
//! subcommands behind the `aqcp` binary.

pub mod commands;
pub mod config;
pub mod metrics;
pub mod source;

pub use commands::Report;
pub use config::ExperimentConfig;
