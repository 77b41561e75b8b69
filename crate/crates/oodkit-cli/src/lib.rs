//! Command-line pipeline wiring the library into the usual flow:
//! `gen` → `train-head` → `fit` → `score` → `eval` → `report`.
//!
//! Exit codes: 0 success, 1 validation/usage error, 2 I/O error. Every
//! randomized step derives from an explicit `--seed`, and all outputs are
//! written atomically, so a fixed-seed pipeline is byte-reproducible.

mod commands;
mod config;
mod report;

use clap::error::ErrorKind;
use clap::Parser;

use oodkit::Error;

pub use commands::{Cli, Command};

/// Parses `argv` (program name first) and runs the selected subcommand.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(err) => {
            return match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{err}");
                    0
                }
                _ => {
                    eprint!("{err}");
                    1
                }
            };
        }
    };
    match commands::dispatch(cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code(&err)
        }
    }
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io(_) | Error::Json(_) => 2,
        _ => 1,
    }
}
