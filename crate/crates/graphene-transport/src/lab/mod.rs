//! Experiment drivers, run configuration, persistence and the CLI.

pub mod cli;
pub mod config;
pub mod experiments;
pub mod persist;
pub mod selftest;

pub use config::{PotentialChoice, RunConfig, RunManifest};
