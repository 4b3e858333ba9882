//! `sparse-har` command-line tool.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or runtime error.

mod args;
mod commands;
mod output;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use output::Usage;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(1),
            };
        }
    };
    let g = &cli.global;
    let result = match &cli.command {
        Command::Synth(a) => commands::synth(g, a),
        Command::Augment(a) => commands::augment(g, a),
        Command::Train(a) => commands::train(g, a),
        Command::Eval(a) => commands::eval(g, a),
        Command::Stream(a) => commands::stream(g, a),
        Command::Sweep(a) => commands::sweep_cmd(g, a),
        Command::Info => commands::info(g),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.chain().any(|c| c.is::<Usage>()) {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
