//! File formats and command-line front end for `forcemosaic-core`.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod io;
pub mod number;
pub mod tables;

pub use commands::{run, Cli, Command};
pub use error::CliError;

use clap::Parser;
use std::ffi::OsString;

/// Parses `args` (program name first), runs the command and returns the
/// process exit code: 0 success, 1 runtime failure, 2 usage error.
pub fn main_with<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
