use clap::Parser;
use qotsim::cli::{execute, Cli};
use std::process::ExitCode;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(qotsim::Error::Io(e)) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
        Err(e) => {
            // Configuration problems follow the usage-error convention.
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
