use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use permlim::lab::{self, RunConfig};

#[derive(Parser)]
#[command(name = "permlim", version, about = "Permanent limits of entropic optimal transport kernels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the cost block against the structural assumptions.
    ValidateCost(Args),
    /// Solve for the Schrödinger potential and write `node,a_value` CSV.
    SolveBridge(Args),
    /// Exact D_n, balanced D̂_n, McCullagh value and Fredholm limit over n_list.
    Converge(Args),
    /// Balancing perturbation norms over n_list (no permanents).
    BalanceStudy(Args),
}

#[derive(clap::Args)]
struct Args {
    #[arg(long)]
    config: PathBuf,
    /// Override `[study] workers`.
    #[arg(long)]
    workers: Option<usize>,
}

fn load(args: &Args) -> Result<RunConfig, ExitCode> {
    match RunConfig::from_file(&args.config) {
        Ok(mut cfg) => {
            if let Some(w) = args.workers {
                cfg.study.workers = w;
            }
            Ok(cfg)
        }
        Err(e) => {
            eprintln!("error: {e}");
            Err(ExitCode::from(1))
        }
    }
}

fn fail(code: i32, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code as u8)
}

fn warn_all(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let args = match &cli.command {
        Command::ValidateCost(a) | Command::SolveBridge(a) | Command::Converge(a) | Command::BalanceStudy(a) => a,
    };
    let cfg = match load(args) {
        Ok(c) => c,
        Err(code) => return code,
    };

    match cli.command {
        Command::ValidateCost(_) => match lab::run_validate_cost(&cfg) {
            Ok(report) => {
                print!("{report}");
                if report.has_failure() {
                    ExitCode::from(2)
                } else {
                    ExitCode::SUCCESS
                }
            }
            Err(e) => fail(e.exit_code(), e),
        },
        Command::SolveBridge(_) => match lab::run_solve_bridge(&cfg) {
            Ok(sol) => {
                println!("gamma0 = {:.15e}", sol.gamma0);
                println!(
                    "residual = {:.3e} after {} iterations (damping {})",
                    sol.final_residual, sol.iterations, sol.damping_used
                );
                ExitCode::SUCCESS
            }
            Err(e) => fail(e.exit_code(), e),
        },
        Command::Converge(_) => match lab::run_converge(&cfg) {
            Ok(study) => {
                warn_all(&study.warnings);
                print!("{}", study.table());
                ExitCode::SUCCESS
            }
            Err(e) => fail(e.exit_code(), e),
        },
        Command::BalanceStudy(_) => match lab::run_balance_study(&cfg) {
            Ok(study) => {
                warn_all(&study.warnings);
                print!("{}", study.table());
                ExitCode::SUCCESS
            }
            Err(e) => fail(e.exit_code(), e),
        },
    }
}
