//! Experiment harness for SPAI-preconditioned Richardson iteration on a
//! simulated analog crossbar.

pub mod args;
pub mod commands;
pub mod error;
pub mod output;
pub mod run;
pub mod spec;

pub use args::Cli;
pub use error::{CliError, CliResult};

use args::Command;

/// Runs one parsed command and returns its summary text.
pub fn execute(cli: &Cli) -> CliResult<String> {
    match &cli.command {
        Command::Table2(a) => commands::table2(a),
        Command::Curves(a) => commands::curves(a),
        Command::Flops(a) => commands::flops(a),
        Command::Density(a) => commands::density(a),
        Command::Bits(a) => commands::bits(a),
        Command::Bounds(a) => commands::bounds(a),
        Command::Gen(a) => commands::gen(a),
        Command::Precond(a) => commands::precond(a),
        Command::Solve(a) => commands::solve_cmd(a),
    }
}
