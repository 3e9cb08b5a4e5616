//! `padrec`: listings, PAD extraction, enrollment, verification,
//! identification, synthetic corpora and scatter data.
//!
//! Exit codes: 0 success, 1 imposter/rejected, 2 usage error, 3 data error.
//! Payloads go to stdout (or the `-o` file); diagnostics go to stderr.

mod commands;

use std::process::ExitCode;

use clap::Parser;

use crate::commands::{Cli, CliError};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                CliError::Usage(_) => 2,
                CliError::Data(_) => 3,
            })
        }
    }
}
