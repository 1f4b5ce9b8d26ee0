use std::process::ExitCode;

use clap::Parser;
use lilsde::Cli;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match lilsde::run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lilsde {}: {e}", cli.command.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
