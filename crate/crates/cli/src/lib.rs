//! Batch command line for `fairdecide`.
//!
//! Each subcommand reads its inputs from a run directory and writes its
//! outputs back there; see [`config::RunConfig`] for the file layout.

pub mod commands;
pub mod config;
pub mod error;
pub mod table;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use config::{Overrides, RunConfig};
use error::{CliError, Exit};

#[derive(Debug, Parser)]
#[command(name = "fairdecide", version, about = "Utility-optimal decision rules under group-fairness constraints")]
pub struct Cli {
    /// TOML run configuration
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit calibration functions and assemble the deliverable bundle
    Calibrate,
    /// Find the utility-maximizing rule under the configured constraint
    Optimize,
    /// Add decisions to the calibrated table
    Apply,
    /// Measure fairness gaps of decisions; exits 1 when the constraint fails
    Audit,
    /// Run the whole pipeline on a generated population
    Simulate,
    /// Write tables for plotting utility and rate curves
    Report,
}

/// Runs one command, printing its summary. Returns the exit status.
pub fn run(cli: &Cli) -> Result<Exit, CliError> {
    let cfg = RunConfig::load(cli.config.as_deref(), &cli.overrides)?;
    match cli.command {
        Command::Calibrate => {
            let c = commands::calibrate(&cfg)?;
            for r in &c.reports {
                println!("{}: expected calibration error {:.6}", r.group_scope, r.expected_calibration_error);
            }
            println!("bundle: {}", cfg.path(&cfg.paths.bundle).display());
        }
        Command::Optimize => print!("{}", commands::optimize::render(&commands::optimize(&cfg)?)),
        Command::Apply => {
            let d = commands::apply(&cfg)?;
            let accepted = d.iter().filter(|i| i.decision == Some(true)).count();
            println!("{accepted} of {} accepted", d.len());
        }
        Command::Audit => {
            let a = commands::audit(&cfg)?;
            print!("{}", commands::audit::render(&a));
            if !a.pass {
                return Ok(Exit::AuditFail);
            }
        }
        Command::Simulate => {
            let s = commands::simulate(&cfg)?;
            println!("expected utility per capita {:.6}", s.expected_utility_per_capita);
            println!("cost of fairness {:.6}", s.cost_of_fairness);
            println!("report: {}", cfg.path(&cfg.paths.simulation).display());
        }
        Command::Report => {
            for p in commands::report(&cfg)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(Exit::Ok)
}
