use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let args = latent_heredity::cli::Cli::parse();
    match latent_heredity::cli::run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(latent_heredity::cli::exit_code(&e))
        }
    }
}
