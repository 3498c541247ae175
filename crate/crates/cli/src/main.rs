mod args;
mod commands;
mod plot;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};

/// Failure that is not the input's fault (rendering, non-finite training).
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct RuntimeError(pub String);

const USAGE: u8 = 1;
const DATA: u8 = 2;
const RUNTIME: u8 = 3;

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<RuntimeError>() {
            return RUNTIME;
        }
        if let Some(e) = cause.downcast_ref::<facefill::Error>() {
            return match e {
                facefill::Error::NonFinite { .. } => RUNTIME,
                _ => DATA,
            };
        }
    }
    DATA
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(USAGE),
            };
        }
    };
    env_logger::Builder::new()
        .parse_filters(&cli.log_level)
        .parse_default_env()
        .format_timestamp(None)
        .init();
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train_cmd(a),
        Command::Edit(a) => commands::edit_cmd(a),
        Command::Eval(c) => commands::eval(c),
        Command::Plot(a) => plot::plot(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
