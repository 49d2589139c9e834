//! `rxnemb` command-line entry point.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 data error.
//! `RXNEMB_THREADS` caps the worker pool used for embedding and distances.

use std::process::ExitCode;

use clap::Parser;

mod cli;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = cli::Cli::parse();
    match cli::run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(cli::exit_code(&e))
        }
    }
}
