//! `perspective` command-line tool.
//!
//! Exit codes: 0 on success, 1 for invalid input or arguments, 2 for
//! runtime failures (I/O, divergence, resources).

mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Ingest(o) => commands::ingest(o),
        Command::Stats(o) => commands::stats(o),
        Command::Split(o) => commands::split(o),
        Command::Train(o) => commands::train(o),
        Command::Eval(m) => commands::eval(m),
        Command::Explain(a) => commands::explain(a),
        Command::Synth(a) => commands::synth(a),
        Command::Run(o) => commands::run(o),
        Command::Report(a) => commands::report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
