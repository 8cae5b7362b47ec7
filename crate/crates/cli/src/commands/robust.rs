//! `robust`: retrain across a grid of training-set perturbations and write
//! the metric matrix.

use std::path::PathBuf;

use anchored_kge::enrich::EnrichmentTable;
use anchored_kge::eval::{render_comparison_table, EvalProtocol};
use anchored_kge::kg::Split;
use anchored_kge::matrix::Matrix;
use anchored_kge::perturb::{robustness_suite, PerturbKind, PerturbSpec};
use anchored_kge::train::TrainConfig;
use clap::Args as ClapArgs;

use super::{
    candidate_pool, load_train_set, load_with_vocab, map_train_err, parse_model_kind,
    parse_ratios, relation_ids_for, Failure,
};
use crate::manifest::{path_with_suffix, write_atomic, ManifestBuilder};

#[derive(Debug, ClapArgs)]
pub struct Args {
    /// Training triples (TSV).
    #[arg(long)]
    pub train: PathBuf,
    /// Validation triples; never perturbed, recorded in the provenance.
    #[arg(long)]
    pub valid: PathBuf,
    /// Test triples used for every cell's evaluation.
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub config: PathBuf,
    /// Score function: transe-l1, transe-l2, distmult, or rotate.
    #[arg(long)]
    pub model: String,
    /// Anchor vector table produced by `enrich`.
    #[arg(long, conflicts_with = "no_anchor")]
    pub anchors: Option<PathBuf>,
    /// Run the grid structure-only.
    #[arg(long)]
    pub no_anchor: bool,
    /// Output directory for robustness.csv / robustness.json.
    #[arg(long)]
    pub out: PathBuf,
    /// Base seed: training uses it directly, cell perturbations derive
    /// theirs from it.
    #[arg(long)]
    pub seed: u64,
    /// Perturbation kinds, comma-separated: delete, add.
    #[arg(long, default_value = "delete,add")]
    pub kinds: String,
    /// Perturbation ratios, comma-separated.
    #[arg(long, default_value = "0.2,0.4,0.6")]
    pub ratios: String,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub relations: Option<String>,
    #[arg(long)]
    pub pool_type: Option<String>,
    #[arg(long)]
    pub num_negatives: Option<usize>,
    #[arg(long, default_value_t = 5)]
    pub trials: u32,
    /// Candidate-sampling seed (default: --seed).
    #[arg(long)]
    pub eval_seed: Option<u64>,
}

impl Args {
    pub fn manifest_path(&self) -> PathBuf {
        self.out.join("manifest.json")
    }
}

pub fn run(args: &Args, mb: &mut ManifestBuilder) -> Result<(), Failure> {
    mb.input(&args.config)?;
    let mut config = TrainConfig::load(&args.config).map_err(map_train_err)?;
    config.seed = args.seed;
    if let Some(threads) = args.threads {
        config.threads = threads;
    }
    config.validate().map_err(map_train_err)?;
    let kind = parse_model_kind(&args.model)?;

    mb.input(&args.train)?;
    mb.input(&args.valid)?;
    mb.input(&args.test)?;
    let train_set = load_train_set(&args.train)?;
    let valid_set = load_with_vocab(
        &args.valid,
        train_set.entities(),
        train_set.relations(),
        Split::Valid,
    )?;
    let test_set = load_with_vocab(
        &args.test,
        train_set.entities(),
        train_set.relations(),
        Split::Test,
    )?;

    let anchors: Option<Matrix<f32>> = match (&args.anchors, args.no_anchor) {
        (Some(path), _) => {
            mb.input(path)?;
            mb.input(&path_with_suffix(path, ".labels"))?;
            let table = EnrichmentTable::import(path, Some(train_set.entities()))
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
    mb.config_hash(config.content_hash());
    mb.seed("train", config.seed);

    let mut kinds = Vec::new();
    for piece in args.kinds.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        kinds.push(match piece.to_ascii_lowercase().as_str() {
            "delete" => PerturbKind::Delete,
            "add" => PerturbKind::Add,
            other => {
                return Err(Failure::usage(format!(
                    "unknown perturbation kind `{other}` (expected delete or add)"
                )))
            }
        });
    }
    let ratios = parse_ratios(&args.ratios)?;
    let mut grid = Vec::new();
    for kind in &kinds {
        for &ratio in &ratios {
            let cell_seed = args.seed.wrapping_add(1).wrapping_add(grid.len() as u64);
            mb.seed(&format!("cell_{kind}_{ratio}"), cell_seed);
            grid.push(PerturbSpec::new(*kind, ratio, cell_seed));
        }
    }

    let rel_ids = relation_ids_for(args.relations.as_deref(), train_set.relations())?;
    let pool = candidate_pool(args.pool_type.as_deref(), train_set.entities())?;
    let eval_seed = args.eval_seed.unwrap_or(args.seed);
    mb.seed("protocol", eval_seed);
    let num_negatives = args
        .num_negatives
        .unwrap_or_else(|| 50.min(pool.len().saturating_sub(1)).max(1));
    let mut protocol = EvalProtocol::sampled(pool, rel_ids, eval_seed);
    protocol.num_negatives = num_negatives;
    protocol.trials = args.trials;
    protocol.validate().map_err(super::eval::map_eval_err)?;

    let matrix = robustness_suite(
        &train_set,
        &valid_set,
        &test_set,
        anchors.as_ref(),
        kind,
        &config,
        &protocol,
        &grid,
    );

    let csv_path = args.out.join("robustness.csv");
    let json_path = args.out.join("robustness.json");
    write_atomic(&csv_path, matrix.to_csv().as_bytes())
        .map_err(|e| Failure::internal(e.to_string()))?;
    write_atomic(&json_path, matrix.to_json().as_bytes())
        .map_err(|e| Failure::internal(e.to_string()))?;
    mb.output(&csv_path);
    mb.output(&json_path);

    let cell_name = |row: &anchored_kge::perturb::RobustnessRow| match row.kind {
        Some(kind) => format!("{kind}@{}", row.ratio),
        None => "baseline".to_string(),
    };
    let table_rows: Vec<(String, anchored_kge::eval::MetricsReport)> = matrix
        .rows
        .iter()
        .filter_map(|row| row.metrics.clone().map(|m| (cell_name(row), m)))
        .collect();
    if !table_rows.is_empty() {
        print!("{}", render_comparison_table(&table_rows));
    }
    for row in &matrix.rows {
        if row.metrics.is_none() {
            println!("{}: {}", cell_name(row), row.status);
        }
    }
    Ok(())
}
