//! `wbmia`: run membership inference experiments from a JSON config.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 configuration error. Logs go
//! to standard error (level via `RUST_LOG`, default `info`); results only to
//! files under `--out-dir`.

mod args;
mod commands;
mod config;
mod error;
mod output;

use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = args::Cli::parse();
    match commands::dispatch(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("wbmia {}: {e}", cli.command.name());
            ExitCode::from(e.exit_code())
        }
    }
}
