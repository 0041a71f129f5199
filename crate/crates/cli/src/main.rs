mod args;
mod bridge_cmd;
mod commands;

use args::{Cli, Command};
use clap::error::ErrorKind;
use clap::Parser;
use std::fmt;
use std::process::ExitCode;

/// Command failure, mapped onto the documented exit codes.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
    Budget(String),
    Transport(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Budget(_) => 3,
            Failure::Transport(_) => 4,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage error: {m}"),
            Failure::Data(m) => write!(f, "error: {m}"),
            Failure::Budget(m) => write!(f, "budget check failed: {m}"),
            Failure::Transport(m) => write!(f, "transport error: {m}"),
        }
    }
}

pub type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("VRSCENE_LOG", "warn"))
        .format_timestamp(None)
        .init();
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
        Command::Scenegen(a) => commands::scenegen(a),
        Command::Stats { scene } => commands::stats(&scene),
        Command::Bake(a) => commands::bake(a),
        Command::Optimize(a) => commands::optimize(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::FitCost { samples, out } => commands::fit_cost(&samples, &out),
        Command::Bridge(b) => bridge_cmd::run(b),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.code())
        }
    }
}
