use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = conucb::cli::Cli::parse();
    match conucb::cli::execute(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
