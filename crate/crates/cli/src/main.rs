mod cli;
mod commands;
mod config;
mod error;
mod manifest;
mod svg;

use clap::Parser;

use cli::{Cli, Command};

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Flow(a) => commands::flow::run(a),
        Command::Train(a) => commands::train::run(a),
        Command::Verify(a) => commands::verify::run(a),
        Command::Sweep(a) => commands::sweep::run(a),
        Command::Datasets(a) => commands::datasets::run(a),
    };
    let code = match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    std::process::exit(code);
}
