//! `eval`: rank held-out triples with a trained checkpoint and report MR,
//! MRR, Hits@k, and AUC.

use std::path::PathBuf;

use anchored_kge::eval::{emit_report, evaluate, EvalError, EvalMode, EvalProtocol, ReportFormat};
use anchored_kge::kg::{Split, Triple};
use anchored_kge::kge::{load_checkpoint, ModelParams};
use clap::Args as ClapArgs;

use super::{
    candidate_pool, load_vocab_dumps, load_with_vocab, relation_ids_for, resolve_checkpoint,
    vocab_pair_hash, Failure,
};
use crate::manifest::{write_atomic, ManifestBuilder};

#[derive(Debug, ClapArgs)]
pub struct Args {
    /// Training output directory (or a single leaf checkpoint inside one).
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Test triples (TSV).
    #[arg(long)]
    pub test: PathBuf,
    /// Output directory for metrics.csv / metrics.json.
    #[arg(long)]
    pub out: PathBuf,
    /// Seed for candidate sampling.
    #[arg(long)]
    pub seed: u64,
    /// Comma-separated relation labels to rank (default: the treatment
    /// relations present in the vocabulary).
    #[arg(long)]
    pub relations: Option<String>,
    /// Entity-type prefix of the candidate pool (default: every entity).
    #[arg(long)]
    pub pool_type: Option<String>,
    /// Negatives per test triple in sampled mode (default: 50, capped at
    /// pool size - 1).
    #[arg(long)]
    pub num_negatives: Option<usize>,
    #[arg(long, default_value_t = 5)]
    pub trials: u32,
    /// sampled or filtered-full.
    #[arg(long, default_value = "sampled")]
    pub mode: String,
    /// Rank the true tail inside the drawn pool instead of appending it.
    #[arg(long)]
    pub include_true_in_pool: bool,
    /// Extra triple files whose true tails are excluded from filtered-full
    /// candidate lists (the test file itself is always excluded).
    #[arg(long)]
    pub filter: Vec<PathBuf>,
}

impl Args {
    pub fn manifest_path(&self) -> PathBuf {
        self.out.join("manifest.json")
    }
}

pub fn parse_mode(s: &str) -> Result<EvalMode, Failure> {
    match s.to_ascii_lowercase().as_str() {
        "sampled" => Ok(EvalMode::Sampled),
        "filtered-full" | "filtered_full" => Ok(EvalMode::FilteredFull),
        other => Err(Failure::usage(format!(
            "unknown mode `{other}` (expected sampled or filtered-full)"
        ))),
    }
}

pub fn map_eval_err(e: EvalError) -> Failure {
    match e {
        EvalError::BadProtocol(_) | EvalError::EmptyTestSet | EvalError::DegenerateCandidates => {
            Failure::usage(e.to_string())
        }
        other => Failure::internal(other.to_string()),
    }
}

pub fn run(args: &Args, mb: &mut ManifestBuilder) -> Result<(), Failure> {
    let mode = parse_mode(&args.mode)?;
    let dirs = resolve_checkpoint(&args.checkpoint)?;
    for name in ["entities.kgev", "relations.kgev", "meta.json"] {
        mb.input(&dirs.leaf.join(name))?;
    }
    let (entities, relations) = load_vocab_dumps(&dirs.vocab_dir)?;
    let (params, meta): (ModelParams<f32>, _) =
        load_checkpoint(&dirs.leaf).map_err(|e| Failure::usage(e.to_string()))?;
    if meta.vocab_hash != vocab_pair_hash(&entities, &relations) {
        return Err(Failure::usage(format!(
            "checkpoint {} was trained on a different vocabulary than {}",
            dirs.leaf.display(),
            dirs.vocab_dir.display()
        )));
    }

    mb.input(&args.test)?;
    let test_set = load_with_vocab(&args.test, &entities, &relations, Split::Test)?;
    let rel_ids = relation_ids_for(args.relations.as_deref(), &relations)?;
    let pool = candidate_pool(args.pool_type.as_deref(), &entities)?;

    let mut filter_known: Vec<Triple> = Vec::new();
    if mode == EvalMode::FilteredFull {
        filter_known.extend_from_slice(test_set.triples());
        for path in &args.filter {
            mb.input(path)?;
            let set = load_with_vocab(path, &entities, &relations, Split::Train)?;
            filter_known.extend_from_slice(set.triples());
        }
    } else if !args.filter.is_empty() {
        eprintln!("note: --filter only affects filtered-full mode; ignored");
    }

    let num_negatives = args
        .num_negatives
        .unwrap_or_else(|| 50.min(pool.len().saturating_sub(1)).max(1));
    let protocol = EvalProtocol {
        candidate_pool: pool,
        num_negatives,
        relations: rel_ids,
        trials: args.trials,
        seed: args.seed,
        mode,
        include_true_in_pool: args.include_true_in_pool,
        filter_known,
    };
    mb.seed("protocol", args.seed);

    let report = evaluate(&params, &test_set, &protocol).map_err(map_eval_err)?;

    let csv_path = args.out.join("metrics.csv");
    let json_path = args.out.join("metrics.json");
    write_atomic(&csv_path, emit_report(&report, ReportFormat::Csv).as_bytes())
        .map_err(|e| Failure::internal(e.to_string()))?;
    write_atomic(&json_path, emit_report(&report, ReportFormat::Json).as_bytes())
        .map_err(|e| Failure::internal(e.to_string()))?;
    mb.output(&csv_path);
    mb.output(&json_path);
    print!("{}", emit_report(&report, ReportFormat::Table));
    Ok(())
}
