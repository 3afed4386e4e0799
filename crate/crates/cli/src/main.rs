mod plot;
mod run;
mod scenario;

use std::process::ExitCode;

use clap::Parser;

use run::{Cli, ExitStatus};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("GRIDFLUX_LOG"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run::dispatch(cli) {
        ExitStatus::Success => ExitCode::from(0),
        ExitStatus::SolverFailure(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        ExitStatus::InputError(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
