use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use depbounds_cli::run::{run_bounds, run_marginals, run_sweep, run_validate, Overrides};
use depbounds_cli::{CliError, THREADS_ENV};

#[derive(Parser)]
#[command(
    name = "depbounds",
    version,
    about = "Model-free price bounds under dependence information"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Lower and upper bounds for every payoff and scenario.
    Bounds(Common),
    /// Bounds over the sweep axes of the configuration.
    Sweep(Common),
    /// Marginals from the configured source.
    Marginals(Common),
    /// Check a configuration without solving.
    Validate(Common),
}

#[derive(Args)]
struct Common {
    config: PathBuf,
    /// Output directory, relative to the working directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, env = THREADS_ENV)]
    threads: Option<usize>,
    /// LP tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Largest admissible number of grid cells.
    #[arg(long)]
    grid_cap: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (Command::Bounds(c) | Command::Sweep(c) | Command::Marginals(c) | Command::Validate(c)) = &cli.command;
    if let Some(n) = c.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("cannot start {n} threads: {e}");
            return ExitCode::from(3);
        }
    }
    let cwd = std::env::current_dir().unwrap_or_default();
    let ov = Overrides {
        out: c.out.as_ref().map(|p| cwd.join(p)),
        tol: c.tol,
        grid_cap: c.grid_cap,
    };
    let result: Result<String, CliError> = match &cli.command {
        Command::Bounds(c) => {
            run_bounds(&c.config, &ov).map(|(t, p)| format!("{} rows written to {}", t.rows.len(), p.display()))
        }
        Command::Sweep(c) => {
            run_sweep(&c.config, &ov).map(|(t, p)| format!("{} rows written to {}", t.rows.len(), p.display()))
        }
        Command::Marginals(c) => run_marginals(&c.config, &ov).map(|ps| {
            ps.iter()
                .map(|p| p.display().to_string())
                .collect::<Vec<_>>()
                .join("\n")
        }),
        Command::Validate(c) => run_validate(&c.config, &ov),
    };
    match result {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
