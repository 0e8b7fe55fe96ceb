use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    match milr::cli::run(milr::cli::Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
