mod args;
mod commands;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use corpus_sieve::ErrorClass;

use args::{Cli, Command};

fn exit_code(class: ErrorClass) -> ExitCode {
    match class {
        ErrorClass::Usage => ExitCode::from(1),
        ErrorClass::Data => ExitCode::from(2),
        ErrorClass::Protocol => ExitCode::from(3),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let result = match cli.command {
        Command::Score(a) => commands::score(a),
        Command::Filter(a) => commands::filter(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Merge(a) => commands::merge(a),
        Command::Ppi(a) => commands::ppi(a),
        Command::Correlate(a) => commands::correlate(a),
        Command::Stats(a) => commands::stats(a),
        Command::Validate(a) => commands::validate(a),
        Command::MockSidecar(a) => commands::mock_sidecar(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(e.class())
        }
    }
}
