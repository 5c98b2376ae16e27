//! Front end for `sep-core`: graph configuration, module chains and the
//! `forward`, `props`, `gradcheck` and `bench` commands.

pub mod chain;
pub mod commands;
pub mod config;
mod error;

pub use error::{CliError, Result};
