use std::process::ExitCode;

use clap::Parser;
use hmix_cli::cli::Cli;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let command = cli.command.name();
    match hmix_cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hmix {command}: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
