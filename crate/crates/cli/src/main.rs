use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use chns::converge::{parse_h_list, DEFAULT_RESOLUTIONS};
use chns::{cmd_converge, cmd_run, keys_help, parse_config};
use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};

/// Finite element Cahn-Hilliard-Navier-Stokes solver.
#[derive(Parser)]
#[command(name = "chns", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a configuration, writing energy.csv and VTK snapshots.
    Run {
        /// Path of the key = value configuration file.
        config: PathBuf,
    },
    /// Manufactured-solution convergence study with tau = h^3.
    Converge {
        /// Path of a configuration with preset = manufactured.
        config: PathBuf,
        /// Cells per side of each level, each doubling the previous.
        #[arg(long, default_value = "4,8,16,32")]
        h_list: String,
        /// Append h = 1/64 to the list.
        #[arg(long)]
        fine: bool,
    },
}

fn load(path: &PathBuf) -> Result<chns::RunConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_config(&text).with_context(|| format!("in {}", path.display()))
}

fn main() -> ExitCode {
    let keys = keys_help();
    let matches = Cli::command()
        .after_long_help(keys.clone())
        .mut_subcommand("run", |c| c.after_long_help(keys.clone()))
        .mut_subcommand("converge", |c| c.after_long_help(keys))
        .get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config } => {
            let cfg = load(&config)?;
            let summary = cmd_run(&cfg)?;
            println!(
                "{} steps, E_modified {:e}, wrote {} and {} snapshots",
                summary.steps,
                summary.last.e_modified,
                summary.csv.display(),
                summary.snapshots.len()
            );
        }
        Command::Converge { config, h_list, fine } => {
            let cfg = load(&config)?;
            let mut levels = parse_h_list(&h_list).map_err(anyhow::Error::msg)?;
            if levels.is_empty() {
                levels = DEFAULT_RESOLUTIONS.to_vec();
            }
            if fine && levels.last() != Some(&64) {
                levels.push(64);
            }
            let mut out = std::io::stdout().lock();
            cmd_converge(&cfg, &levels, &mut out)?;
        }
    }
    Ok(())
}
