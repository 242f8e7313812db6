mod cli;
mod commands;

use std::process::ExitCode;

use clap::Parser;
use cli::{Cli, Command};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Mine(args) => commands::mine_cmd(args),
        Command::Aggregate(args) => commands::aggregate_cmd(args),
        Command::Whatif(args) => commands::whatif_cmd(args),
        Command::Remove(args) => commands::remove_cmd(args),
        Command::Export(args) => commands::export_cmd(args),
        Command::Serve(args) => commands::serve_cmd(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
