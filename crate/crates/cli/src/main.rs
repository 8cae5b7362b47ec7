//! `anchored-kge`: knowledge-graph embeddings with LLM-derived textual
//! anchors — enrichment, training, ranking evaluation, robustness grids,
//! masking ablations, and repurposing queries.
//!
//! Exit codes: 0 success, 1 internal error, 2 usage or environment error,
//! 3 numerical divergence. Every invocation writes a run manifest next to
//! its outputs, success or not.

mod commands;
mod manifest;

use clap::{Parser, Subcommand};

use crate::commands::Failure;
use crate::manifest::ManifestBuilder;

#[derive(Parser)]
#[command(
    name = "anchored-kge",
    version,
    about = "Knowledge-graph embeddings with textual anchors"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Describe and embed every entity; build the anchor vector table.
    Enrich(commands::enrich::Args),
    /// Train a model on a triple file.
    Train(commands::train::Args),
    /// Rank held-out triples and report MR / MRR / Hits@k / AUC.
    Eval(commands::eval::Args),
    /// Retrain across a grid of graph perturbations.
    Robust(commands::robust::Args),
    /// Mask descriptions at increasing ratios; re-embed, retrain, compare.
    MaskAblate(commands::mask::Args),
    /// Rank treatment candidates for one query entity.
    Repurpose(commands::repurpose::Args),
}

fn main() {
    let cli = Cli::parse();
    let (name, manifest_path) = match &cli.command {
        Command::Enrich(a) => ("enrich", a.manifest_path()),
        Command::Train(a) => ("train", a.manifest_path()),
        Command::Eval(a) => ("eval", a.manifest_path()),
        Command::Robust(a) => ("robust", a.manifest_path()),
        Command::MaskAblate(a) => ("mask-ablate", a.manifest_path()),
        Command::Repurpose(a) => ("repurpose", a.manifest_path()),
    };
    let mut mb = ManifestBuilder::new(name, manifest_path);
    let result: Result<(), Failure> = match &cli.command {
        Command::Enrich(a) => commands::enrich::run(a, &mut mb),
        Command::Train(a) => commands::train::run(a, &mut mb),
        Command::Eval(a) => commands::eval::run(a, &mut mb),
        Command::Robust(a) => commands::robust::run(a, &mut mb),
        Command::MaskAblate(a) => commands::mask::run(a, &mut mb),
        Command::Repurpose(a) => commands::repurpose::run(a, &mut mb),
    };
    if let Err(e) = mb.finish(&result) {
        eprintln!("warning: could not write the run manifest: {e}");
    }
    match result {
        Ok(()) => {}
        Err(failure) => {
            eprintln!("error: {failure}");
            std::process::exit(failure.code);
        }
    }
}
