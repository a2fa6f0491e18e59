#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod args;
mod commands;
mod manifest;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet {
        log::LevelFilter::Warn
    } else {
        log::LevelFilter::Info
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .parse_default_env()
        .init();

    let result = match &cli.command {
        Command::GenDensity(a) => commands::gen_density(&cli, a),
        Command::Train(a) => commands::train(&cli, a),
        Command::Eval(a) => commands::eval(&cli, a),
        Command::Oracle(a) => commands::oracle(&cli, a),
        Command::Invert(a) => commands::invert(&cli, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
