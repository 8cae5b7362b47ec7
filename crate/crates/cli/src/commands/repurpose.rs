//! `repurpose`: rank treatment candidates for one query entity with a
//! trained checkpoint. Querying a disease ranks compounds (head side);
//! querying a compound ranks diseases (tail side).

use std::path::PathBuf;

use anchored_kge::kg::{build_type_index, EntityId};
use anchored_kge::kge::{load_checkpoint, score, ModelParams};
use clap::Args as ClapArgs;

use super::{load_vocab_dumps, relation_ids_for, resolve_checkpoint, vocab_pair_hash, Failure};
use crate::manifest::{write_atomic, ManifestBuilder};

#[derive(Debug, ClapArgs)]
pub struct Args {
    /// Training output directory (or a single leaf checkpoint inside one).
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Query entity label, e.g. `Disease::D3_7`.
    #[arg(long)]
    pub query: String,
    /// Candidates to report; clamped to the pool size.
    #[arg(long, default_value_t = 10)]
    pub top_k: usize,
    /// Output directory for ranking.csv.
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated treatment relation labels (default: the treatment
    /// relations present in the vocabulary).
    #[arg(long)]
    pub relations: Option<String>,
    /// Entity type on the treating side.
    #[arg(long, default_value = "Compound")]
    pub head_type: String,
    /// Entity type on the treated side.
    #[arg(long, default_value = "Disease")]
    pub tail_type: String,
}

impl Args {
    pub fn manifest_path(&self) -> PathBuf {
        self.out.join("manifest.json")
    }
}

pub fn run(args: &Args, mb: &mut ManifestBuilder) -> Result<(), Failure> {
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

    let query_id = entities
        .get(&args.query)
        .map(EntityId)
        .ok_or_else(|| Failure::usage(format!("unknown entity `{}`", args.query)))?;
    let query_type = args
        .query
        .split_once("::")
        .map(|(prefix, _)| prefix)
        .unwrap_or_default();

    let index = build_type_index(&entities).map_err(|e| Failure::usage(e.to_string()))?;
    // Which side of (head, treats, tail) does the query occupy?
    let (query_is_head, pool_type) = if query_type == args.head_type {
        (true, args.tail_type.as_str())
    } else if query_type == args.tail_type {
        (false, args.head_type.as_str())
    } else {
        return Err(Failure::usage(format!(
            "entity type `{query_type}` cannot anchor a repurposing query; valid types: \
             {} (ranks {} candidates) or {} (ranks {} candidates)",
            args.head_type, args.tail_type, args.tail_type, args.head_type
        )));
    };
    let pool = index.pool(pool_type).ok_or_else(|| {
        Failure::usage(format!(
            "no entities of type `{pool_type}` in the vocabulary; available types: {}",
            index.types().collect::<Vec<_>>().join(", ")
        ))
    })?;
    let rel_ids = relation_ids_for(args.relations.as_deref(), &relations)?;

    // Best (lowest) score over the treatment relations, per candidate.
    let mut ranked: Vec<(f64, EntityId, usize)> = pool
        .iter()
        .map(|&candidate| {
            let (h, t) = if query_is_head {
                (query_id, candidate)
            } else {
                (candidate, query_id)
            };
            let (value, rel_slot) = rel_ids
                .iter()
                .enumerate()
                .map(|(slot, &r)| (score(&params, h, r, t), slot))
                .min_by(|a, b| a.0.total_cmp(&b.0))
                .expect("relations are non-empty");
            (value, candidate, rel_slot)
        })
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    ranked.truncate(args.top_k.min(ranked.len()));

    let mut csv = String::from("rank,entity,relation,score\n");
    println!("{:>4}  {:>12}  {}", "rank", "score", "candidate");
    for (position, (value, candidate, rel_slot)) in ranked.iter().enumerate() {
        let label = entities.label(candidate.0);
        let rel_label = relations.label(rel_ids[*rel_slot].0);
        println!("{:>4}  {:>12.6}  {label}", position + 1, value);
        csv.push_str(&format!("{},{label},{rel_label},{value}\n", position + 1));
    }
    let csv_path = args.out.join("ranking.csv");
    write_atomic(&csv_path, csv.as_bytes()).map_err(|e| Failure::internal(e.to_string()))?;
    mb.output(&csv_path);
    println!("wrote {}", csv_path.display());
    Ok(())
}
