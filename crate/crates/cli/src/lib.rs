//! File formats and the `sconv` command line.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

pub use error::{CliError, CliResult};
