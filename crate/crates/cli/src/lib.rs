//! The `hmix` command-line tool and elicitation service.
//!
//! Subcommands build stimulus pools, run the HTTP service participants answer
//! through, analyze and fit the collected judgments, and train classifiers
//! under the resulting label policies. Each command that writes a directory
//! also writes a `manifest.json` describing the run.

pub mod api;
pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod manifest;
pub mod plot;
pub mod pool;
pub mod server;

use cli::{Cli, Command};
use error::Result;

pub fn run(cli: Cli) -> Result<()> {
    let config = cli.config.as_deref();
    match &cli.command {
        Command::Mix(a) => commands::mix::run(a, config),
        Command::Serve(a) => commands::serve::run(a, config),
        Command::Analyze(a) => commands::analyze::run(a, config),
        Command::Fit(a) => commands::fit::run(a, config),
        Command::Train(a) => commands::train::run(a, config),
        Command::Compare(a) => commands::compare::run(a, config),
        Command::Export(a) => commands::export::run(a, config),
        Command::Simulate(a) => commands::simulate::run(a, config),
    }
}
