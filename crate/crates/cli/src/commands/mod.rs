mod eval;
mod gen_data;
mod layout;
mod params;
mod train;
mod verify;

use clap::{Parser, Subcommand};

use crate::failure::CmdResult;

#[derive(Debug, Parser)]
#[command(name = "gridlift", version, about = "Grid-based 2D-to-3D pose lifting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic pose dataset (CSV plus camera sidecar).
    GenData(gen_data::Args),
    /// Train a model from a run config.
    Train(train::Args),
    /// Score a checkpoint on a dataset and print a metric report.
    Eval(eval::Args),
    /// Build, shuffle, validate or dump joint-to-cell layouts.
    #[command(subcommand)]
    Layout(layout::LayoutCommand),
    /// Run the built-in self-checks.
    Verify(verify::Args),
    /// Print the parameter count of a model config.
    Params(params::Args),
}

pub fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::GenData(a) => gen_data::run(a),
        Command::Train(a) => train::run(a),
        Command::Eval(a) => eval::run(a),
        Command::Layout(c) => layout::run(c),
        Command::Verify(a) => verify::run(a),
        Command::Params(a) => params::run(a),
    }
}
