mod config;
mod dataset;
mod run;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use grande::data::{generate_synthetic, inspect_dual};
use grande::io::write_edge_list;

use config::ConfigArgs;

/// Directed multigraph edge classification experiments.
#[derive(Parser, Debug)]
#[command(name = "grande", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    config: ConfigArgs,
    /// Suppress per-evaluation progress lines on stderr.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Split {
    Train,
    Val,
    Test,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print dataset size, label and split statistics as JSON.
    LoadStats,
    /// Print dual-graph statistics for the configured dual mode as JSON.
    InspectDual,
    /// Train, select on validation AUC, evaluate on test, write artifacts.
    Train,
    /// Score a split with a saved checkpoint.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: Split,
    },
    /// Train the six ablation variants, one subdirectory each.
    Ablate,
    /// Write the synthetic sink-hub dataset as a labeled edge list.
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    let mut cfg = cli.config.resolve()?;
    match cli.command {
        Command::LoadStats => {
            let data = dataset::load(&mut cfg)?;
            print_json(&dataset::stats(&data))
        }
        Command::InspectDual => {
            let data = dataset::load(&mut cfg)?;
            print_json(&inspect_dual(&data.graph, cfg.dual_mode)?)
        }
        Command::Train => {
            let data = dataset::load(&mut cfg)?;
            let (_, flat) = run::train_and_report(&data, &cfg, cli.quiet)?;
            print_json(&flat)
        }
        Command::Evaluate { checkpoint, split } => {
            let data = dataset::load(&mut cfg)?;
            let name = match split {
                Split::Train => "train",
                Split::Val => "val",
                Split::Test => "test",
            };
            print_json(&run::evaluate_checkpoint(&data, &cfg, &checkpoint, name)?)
        }
        Command::Ablate => {
            let data = dataset::load(&mut cfg)?;
            print_json(&run::ablate(&data, &cfg, cli.quiet)?)
        }
        Command::Synth { out } => {
            let data = generate_synthetic(&cfg.synthetic(), cfg.seed)?;
            let file = File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            let mut w = BufWriter::new(file);
            write_edge_list(&data.graph, &mut w)?;
            w.flush()?;
            print_json(&dataset::stats(&data))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let cause = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {cause}");
            ExitCode::FAILURE
        }
    }
}
