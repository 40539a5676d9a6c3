//! Command-line plumbing around `rigoletto-core`: dataset files, synthetic
//! data, configuration, artifacts and the subcommands.

pub mod archive;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod output;
pub mod synth;

pub use error::{CliError, Result};
