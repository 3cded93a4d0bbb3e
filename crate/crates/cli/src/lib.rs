//! Front end of the `nmm` binary: configuration, the `bench` and `tof`
//! commands and the invariant checks behind `selftest`.

pub mod checks;
pub mod commands;
pub mod config;
mod error;
pub mod selftest;

pub use config::{BenchSetup, Config, Overrides, TofSetup};
pub use error::{CliError, Result};
