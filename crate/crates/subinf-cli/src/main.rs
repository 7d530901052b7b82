//! `subinf` — command-line runner for the subelliptic ∞-Laplace toolkit.
//!
//! Subcommands: `residual`, `ccdist`, `flow`, `varcheck`, `maxmin`,
//! `psolve`, `frames`, `suite`. Every run echoes its fully resolved
//! configuration into the JSON report; reports are written atomically.
//!
//! Exit codes: 0 = success, 1 = validation error (bad names, geometry, or
//! config), 2 = numerical failure (a check or criterion did not pass).

mod commands;
mod config;

use clap::Parser;

#[derive(Parser, Debug)]
#[command(name = "subinf", version, about = "Subelliptic infinity-Laplace system toolkit")]
struct Cli {
    #[command(subcommand)]
    command: commands::Command,
}

fn main() {
    let cli = Cli::parse();
    std::process::exit(match commands::run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    });
}
