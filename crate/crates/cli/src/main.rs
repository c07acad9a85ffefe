//! Command-line front end for the reserve-control solver.
//!
//! Exit status: 0 on success, 1 when a requested check fails, 2 on usage
//! or configuration errors.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "reservectl",
    version,
    about = "Closed-form solver, verifier, and simulators for the bounded-payout reserve model"
)]
struct Cli {
    /// JSON run configuration: model parameters plus optional command blocks
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Write the report to this file instead of stdout
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,

    /// Override the simulation seed from the config
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the model: regime, thresholds, segment coefficients, samples
    Solve,
    /// Check the solution against its equation, joins, and shape bounds
    Verify {
        /// Scale the candidate by 1 plus this amount first (negative control)
        #[arg(long, value_name = "REL")]
        perturb: Option<f64>,
    },
    /// Monte Carlo estimate of a policy's value from each start level
    Simulate {
        /// optimal | reflected | constant:a=A,c=C | threshold:a=A,x1=T
        #[arg(long, value_name = "SPEC")]
        policy: Option<String>,
    },
    /// Re-solve on a finite-difference grid and compare
    Oracle,
    /// Tabulate regime and policy traits along a one-parameter family
    Sweep,
}

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    let cli = Cli::parse();
    let cfg = match config::load_config(cli.config.as_deref()) {
        Ok(cfg) => cfg,
        Err(msg) => {
            eprintln!("error: {msg}");
            return 2;
        }
    };
    let built = match &cli.command {
        Command::Solve => commands::solve_report(&cfg),
        Command::Verify { perturb } => commands::verify_report(&cfg, *perturb),
        Command::Simulate { policy } => {
            commands::simulate_report(&cfg, policy.as_deref(), cli.seed)
        }
        Command::Oracle => commands::oracle_report(&cfg),
        Command::Sweep => commands::sweep_report(&cfg),
    };
    let output = match built {
        Ok(output) => output,
        Err(msg) => {
            eprintln!("error: {msg}");
            return 2;
        }
    };
    let text = match cli.format {
        Format::Json => {
            let mut t = serde_json::to_string_pretty(&output.json).expect("report serializes");
            t.push('\n');
            t
        }
        Format::Csv => output.csv,
    };
    if let Some(path) = &cli.out {
        if let Err(e) = std::fs::write(path, &text) {
            eprintln!("error: cannot write {}: {e}", path.display());
            return 2;
        }
    } else {
        print!("{text}");
    }
    if output.ok {
        0
    } else {
        1
    }
}
