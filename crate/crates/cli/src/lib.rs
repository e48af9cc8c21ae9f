//! Command-line pipeline for headline/body incongruity detection.
//!
//! Thin orchestration over the `incongruity` library: a TOML run
//! configuration ([`config`]) drives the subcommands ([`commands`]), a
//! trained checkpoint scores new text ([`predict`]), and every failure
//! maps to a stable exit code with a machine-parsable first line
//! ([`error`]).

pub mod commands;
pub mod config;
pub mod error;
pub mod predict;

pub use config::{resolve, Overrides, RunConfig};
pub use error::{CliError, ExitKind, Result};
