//! `lor`: synthetic data, registration and the experiment harness.

mod commands;
mod config;
mod plot;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::Common;

#[derive(Parser, Debug)]
#[command(name = "lor", version, about = "Locally orderless registration experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the experiment's synthetic pair as a.json/b.json (plus PGM in 2D).
    Gen(Common),
    /// Register a moving image to a reference and write the result as JSON.
    Register {
        #[arg(long)]
        moving: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        /// JSON registration config (measure, estimator, scales, transform, optimizer).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Result file.
        #[arg(long, default_value = "out/registration.json")]
        out: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Optimum offsets of M(A o phi, B) and M(B, A o phi) over the scale grids.
    Asymmetry(Common),
    /// Measure-vs-offset curves and peak statistics over the scale grids.
    Scales(Common),
    /// Joint densities of both argument orders and their Jensen-Shannon divergence.
    Jointreport(Common),
    /// Time per objective-and-gradient evaluation against the flop model.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        bins: Option<usize>,
        #[arg(long)]
        evaluations: Option<usize>,
    },
    /// Render a CSV written by another subcommand.
    Plot {
        #[arg(long)]
        input: PathBuf,
        /// Output file; defaults to the input with .svg or .png.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Gen(c) => commands::gen(&c),
        Command::Register {
            moving,
            reference,
            config,
            out,
            threads,
        } => commands::register_images(&moving, &reference, config.as_deref(), &out, threads),
        Command::Asymmetry(c) => commands::asymmetry(&c),
        Command::Scales(c) => commands::scales(&c),
        Command::Jointreport(c) => commands::jointreport(&c),
        Command::Bench {
            common,
            samples,
            bins,
            evaluations,
        } => commands::bench(&common, samples, bins, evaluations),
        Command::Plot { input, out } => commands::plot_file(&input, out.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
