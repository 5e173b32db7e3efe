use std::process::ExitCode;

use clap::Parser;
use negsuite::cli::{run, Cli};

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("negsuite: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
