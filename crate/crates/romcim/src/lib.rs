//! File formats, run manifests and the `romcim` command line on top of
//! `romcim-core`.

pub mod cli;
pub mod error;
pub mod formats;
pub mod manifest;

pub use error::{CliError, CliResult};
