use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;

#[derive(Parser)]
#[command(
    name = "bira",
    version,
    about = "Inexact-restoration solver: runs, suite, trace audits and complexity sweeps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one problem and write its trace.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Trace path (default: <problem>.trace.json).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve and audit every built-in problem.
    Suite {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write the result table as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Check a trace against the worst-case bounds.
    Audit {
        trace: PathBuf,
        /// Write the audit report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep eps_opt and fit evaluations against 1/eps_opt.
    Complexity {
        #[arg(long)]
        config: PathBuf,
        /// CSV path (default: <problem>.complexity.csv).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        jobs: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            let code = if e.use_stderr() {
                commands::EXIT_ERROR
            } else {
                commands::EXIT_OK
            };
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run { config, out } => commands::cmd_run(&config, out),
        Command::Suite { config, out, jobs } => commands::cmd_suite(config.as_deref(), out, jobs),
        Command::Audit { trace, out } => commands::cmd_audit(&trace, out),
        Command::Complexity { config, out, jobs } => commands::cmd_complexity(&config, out, jobs),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::EXIT_ERROR)
        }
    }
}
