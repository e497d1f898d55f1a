//! Library side of the `sosc` command: every verb is a function over
//! in-memory values plus a thin file wrapper, so tests can drive the same
//! code paths as the binary.

pub mod commands;
pub mod config;
mod error;

pub use config::{ControlSettings, RunConfig};
pub use error::{CliError, Result};
