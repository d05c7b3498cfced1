//! The `censgmr` command-line tool: data ingestion, the `fit`, `select`,
//! `simulate` and `moments` commands, and their output formats.

pub mod commands;
pub mod error;
pub mod io;
pub mod report;

pub use commands::{run, Cli};
pub use error::{CliError, CliResult};
