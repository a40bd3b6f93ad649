use std::process::ExitCode;

use clap::Parser;
use hoverpost_cli::{args::Cli, run};

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hoverpost: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
