use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = kvsim::cli::Cli::parse();
    match kvsim::cli::execute(cli, &mut std::io::stdout()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
