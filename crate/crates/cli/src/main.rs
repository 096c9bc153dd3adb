//! `activermap`: run, compare and render active reconstruction experiments.

mod artifacts;
mod commands;
mod config;
mod poses;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "activermap", version, about = "Active 3D reconstruction with an online voxel radiance field")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One exploration + refinement run; writes metrics, images, points and a checkpoint.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (defaults to all cores).
        #[arg(long)]
        workers: Option<usize>,
        /// Overrides the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every policy over several seeds and tabulate the mean metrics.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 3)]
        seeds: u64,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render poses from a checkpoint.
    Render {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        poses: PathBuf,
        /// Defaults to `renders` next to the poses file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ACTIVERMAP_LOG", "info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            seed,
            workers,
            out,
        } => commands::run(&config, seed, workers, out),
        Command::Compare {
            config,
            seeds,
            workers,
            out,
        } => commands::compare(&config, seeds, workers, out),
        Command::Render { checkpoint, poses, out } => commands::render(&checkpoint, &poses, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
