//! `train`: fit a model on a triple file, with or without textual anchors,
//! and leave a self-contained checkpoint directory behind.

use std::path::PathBuf;

use anchored_kge::enrich::EnrichmentTable;
use anchored_kge::kge::{init_params, Init};
use anchored_kge::matrix::Matrix;
use anchored_kge::train::{log_to_csv, train, TrainConfig, TrainOptions};
use clap::Args as ClapArgs;

use super::{load_train_set, map_train_err, parse_model_kind, vocab_pair_hash, Failure};
use crate::manifest::{path_with_suffix, write_atomic, ManifestBuilder};

#[derive(Debug, ClapArgs)]
pub struct Args {
    /// Training triples (TSV: head, relation, tail).
    #[arg(long)]
    pub triples: PathBuf,
    /// Training configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Score function: transe-l1, transe-l2, distmult, or rotate.
    #[arg(long)]
    pub model: String,
    /// Anchor vector table produced by `enrich`.
    #[arg(long, conflicts_with = "no_anchor")]
    pub anchors: Option<PathBuf>,
    /// Train structure-only: anchor weight forced to zero, random init.
    #[arg(long)]
    pub no_anchor: bool,
    /// Output directory: checkpoints, vocabulary dumps, training log.
    #[arg(long)]
    pub checkpoint_dir: PathBuf,
    /// Run seed; overrides the config file so reruns are reproducible on
    /// purpose, not by accident.
    #[arg(long)]
    pub seed: u64,
    /// Overrides the config file thread count.
    #[arg(long)]
    pub threads: Option<usize>,
}

impl Args {
    pub fn manifest_path(&self) -> PathBuf {
        self.checkpoint_dir.join("manifest.json")
    }
}

pub fn run(args: &Args, mb: &mut ManifestBuilder) -> Result<(), Failure> {
    mb.input(&args.config)?;
    let mut config = TrainConfig::load(&args.config).map_err(map_train_err)?;
    config.seed = args.seed;
    if let Some(threads) = args.threads {
        config.threads = threads;
    }
    let kind = parse_model_kind(&args.model)?;

    mb.input(&args.triples)?;
    let dataset = load_train_set(&args.triples)?;

    let anchors: Option<Matrix<f32>> = match (&args.anchors, args.no_anchor) {
        (Some(path), _) => {
            mb.input(path)?;
            mb.input(&path_with_suffix(path, ".labels"))?;
            let table = EnrichmentTable::import(path, Some(dataset.entities()))
                .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
            Some(
                table
                    .anchor_matrix(config.dim)
                    .map_err(|e| Failure::usage(e.to_string()))?,
            )
        }
        (None, true) => {
            config.zeta1 = 0.0;
            None
        }
        (None, false) => {
            return Err(Failure::usage(
                "pass --anchors <table> or opt out explicitly with --no-anchor",
            ))
        }
    };

    config.validate().map_err(map_train_err)?;
    mb.config_hash(config.content_hash());
    mb.seed("train", config.seed);

    std::fs::create_dir_all(&args.checkpoint_dir).map_err(|e| {
        Failure::usage(format!("cannot create {}: {e}", args.checkpoint_dir.display()))
    })?;
    let entities_tsv = args.checkpoint_dir.join("entities.tsv");
    let relations_tsv = args.checkpoint_dir.join("relations.tsv");
    dataset
        .entities()
        .write_tsv(&entities_tsv)
        .map_err(|e| Failure::internal(e.to_string()))?;
    dataset
        .relations()
        .write_tsv(&relations_tsv)
        .map_err(|e| Failure::internal(e.to_string()))?;
    let resolved = args.checkpoint_dir.join("config_resolved.toml");
    write_atomic(&resolved, config.to_toml_string().as_bytes())
        .map_err(|e| Failure::internal(e.to_string()))?;
    for path in [&entities_tsv, &relations_tsv, &resolved] {
        mb.output(path);
    }

    let initial = match &anchors {
        Some(table) => init_params(
            dataset.entity_count(),
            dataset.relation_count(),
            config.dim,
            kind,
            config.gamma,
            Init::TextAnchored {
                anchors: table,
                seed: config.seed,
            },
        ),
        None => init_params(
            dataset.entity_count(),
            dataset.relation_count(),
            config.dim,
            kind,
            config.gamma,
            Init::Random { seed: config.seed },
        ),
    }
    .map_err(|e| Failure::usage(e.to_string()))?;

    let options = TrainOptions {
        checkpoint_dir: Some(args.checkpoint_dir.clone()),
        vocab_hash: vocab_pair_hash(dataset.entities(), dataset.relations()),
        config_hash: config.content_hash(),
    };
    let outcome =
        train(&dataset, anchors.as_ref(), initial, &config, &options).map_err(map_train_err)?;

    let log_path = args.checkpoint_dir.join("training_log.csv");
    write_atomic(&log_path, log_to_csv(&outcome.log).as_bytes())
        .map_err(|e| Failure::internal(e.to_string()))?;
    mb.output(&log_path);
    let final_dir = args.checkpoint_dir.join("final");
    for name in ["entities.kgev", "relations.kgev", "meta.json"] {
        mb.output(final_dir.join(name));
    }

    if let Some(row) = outcome.log.last() {
        println!(
            "step {}: link {:.6} anchor {:.6} total {:.6}",
            row.step, row.link_loss, row.anchor_loss, row.total_loss
        );
    }
    match &outcome.last_checkpoint {
        Some(path) => println!("final checkpoint: {}", path.display()),
        None => println!("training finished (no checkpoint directory configured)"),
    }
    Ok(())
}
