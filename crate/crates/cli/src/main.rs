use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod cost_cmd;
mod mac_cmd;
mod sim_cmd;

/// VANET routing laboratory.
///
/// Log verbosity is read from `VANETLAB_LOG` (env_logger syntax, default
/// `warn`).
#[derive(Parser)]
#[command(name = "vanetlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulation runs, matrices and comparisons.
    #[command(subcommand)]
    Sim(sim_cmd::SimCommand),
    /// Analytic p-persistent CSMA model.
    #[command(subcommand, name = "mac-model")]
    MacModel(mac_cmd::MacCommand),
    /// Routing control-cost formulas.
    #[command(subcommand)]
    Cost(cost_cmd::CostCommand),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("VANETLAB_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Sim(cmd) => sim_cmd::run(cmd),
        Command::MacModel(cmd) => mac_cmd::run(cmd),
        Command::Cost(cmd) => cost_cmd::run(cmd),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
