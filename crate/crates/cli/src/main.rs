use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use covmech_cli::config::{self, Overrides};
use covmech_cli::{commands, CliError, Status};

/// Covariant Hamiltonian mechanics: trajectories and conservation checks.
#[derive(Parser)]
#[command(name = "covmech", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Directory for reports and trajectory files.
    #[arg(long, global = true, value_name = "DIR")]
    output: Option<PathBuf>,
    /// Seed for random sweep points.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Number of random sweep points.
    #[arg(long, global = true, value_name = "N")]
    points: Option<usize>,
    /// Also run the catalog's deliberately broken variants (they must fail).
    #[arg(long, global = true)]
    negative_controls: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Integrate a trajectory and report invariant drift.
    Simulate { config: PathBuf },
    /// Killing, hierarchy, conservation and closure sweeps.
    Verify { config: PathBuf },
    /// Pairwise brackets of the configured observables.
    BracketTable { config: PathBuf },
}

fn run(cli: Cli) -> Result<Status, CliError> {
    let overrides = Overrides {
        output: cli.output,
        seed: cli.seed,
        points: cli.points,
        negative_controls: cli.negative_controls,
    };
    let (path, command) = match cli.command {
        Cmd::Simulate { config } => (config, commands::Command::Simulate),
        Cmd::Verify { config } => (config, commands::Command::Verify),
        Cmd::BracketTable { config } => (config, commands::Command::BracketTable),
    };
    let resolved = config::load(&path)?.resolve(&overrides)?;
    let outcome = match command {
        commands::Command::Simulate => commands::simulate(&resolved),
        commands::Command::Verify => commands::verify(&resolved),
        commands::Command::BracketTable => commands::bracket_table(&resolved),
    }?;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    for line in &outcome.summary {
        println!("{line}");
    }
    for f in &outcome.files {
        println!("wrote {}", f.display());
    }
    Ok(outcome.status)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { Status::ConfigError.code() as u8 } else { 0 });
        }
    };
    match run(cli) {
        Ok(status) => ExitCode::from(status.code() as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.status().code() as u8)
        }
    }
}
