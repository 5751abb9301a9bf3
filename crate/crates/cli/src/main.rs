//! Command-line front end for the `localdiff` solvers.

mod args;
mod commands;
mod output;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};

/// Exit status for a run that finished without converging.
const EXIT_NOT_CONVERGED: u8 = 2;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::FAILURE,
            };
        }
    };
    let result = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.max(1))
        .build()
        .map_err(anyhow::Error::from)
        .and_then(|pool| pool.install(|| run(&cli)));
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_NOT_CONVERGED),
        Err(e) => {
            let msg = serde_json::json!({ "error": format!("{e:#}") });
            eprintln!("{msg}");
            ExitCode::FAILURE
        }
    }
}

/// Runs the selected command. Returns whether every solve converged.
fn run(cli: &Cli) -> anyhow::Result<bool> {
    let parallel = cli.threads > 1;
    match &cli.command {
        Command::Solve(a) => commands::solve(a, parallel),
        Command::Bench(a) => commands::bench(a, parallel),
        Command::Dynamic(a) => commands::dynamic(a),
        Command::Pratio(a) => commands::pratio(a, parallel),
        Command::Gen(a) => commands::gen(a).map(|()| true),
    }
}
