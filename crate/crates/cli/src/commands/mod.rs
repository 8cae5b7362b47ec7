//! One module per subcommand plus the plumbing they share: exit-code
//! carrying failures, vocabulary-aware triple loading, checkpoint
//! resolution, and protocol construction from flags.

pub mod enrich;
pub mod eval;
pub mod mask;
pub mod repurpose;
pub mod robust;
pub mod train;

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anchored_kge::eval::DEFAULT_TREATMENT_RELATIONS;
use anchored_kge::kg::{
    load_triples, EntityId, RelationId, Split, TripleSet, VocabMode, Vocabulary,
};
use anchored_kge::kge::ModelKind;
use anchored_kge::train::TrainError;
use sha2::{Digest, Sha256};

/// Environment variable holding the bearer token for online enrichment.
pub const ENV_API_KEY: &str = "ANCHORED_KGE_API_KEY";

pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

/// A command failure bound to its process exit code: 1 for internal errors,
/// 2 for usage and environment problems, 3 for numerical divergence.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_INTERNAL,
            message: message.into(),
        }
    }

    pub fn diverged(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_DIVERGED,
            message: message.into(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Failure {}

/// Load a triple file, building its vocabulary. Duplicate lines are dropped
/// by the loader; surface the count so silently shrinking inputs are
/// noticed.
pub fn load_train_set(path: &Path) -> Result<TripleSet, Failure> {
    let outcome = load_triples(path, VocabMode::Build, Split::Train)
        .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    if outcome.duplicates_dropped > 0 {
        eprintln!(
            "note: {} dropped {} duplicate triple(s)",
            path.display(),
            outcome.duplicates_dropped
        );
    }
    Ok(outcome.set)
}

/// Load a triple file against an existing vocabulary; labels unseen during
/// training are usage errors.
pub fn load_with_vocab(
    path: &Path,
    entities: &Arc<Vocabulary>,
    relations: &Arc<Vocabulary>,
    split: Split,
) -> Result<TripleSet, Failure> {
    let outcome = load_triples(
        path,
        VocabMode::Reuse {
            entities: Arc::clone(entities),
            relations: Arc::clone(relations),
        },
        split,
    )
    .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    Ok(outcome.set)
}

pub fn parse_model_kind(s: &str) -> Result<ModelKind, Failure> {
    s.parse::<ModelKind>().map_err(|e| Failure::usage(e.to_string()))
}

/// One hash covering both vocabularies; stored in checkpoint metadata so a
/// checkpoint can refuse evaluation against the wrong graph.
pub fn vocab_pair_hash(entities: &Vocabulary, relations: &Vocabulary) -> String {
    let mut hasher = Sha256::new();
    hasher.update(entities.content_hash().as_bytes());
    hasher.update(b":");
    hasher.update(relations.content_hash().as_bytes());
    hex::encode(hasher.finalize())
}

/// Where a trained model lives on disk: the leaf directory with the
/// parameter tables and the directory holding the vocabulary dumps.
pub struct CheckpointDirs {
    pub leaf: PathBuf,
    pub vocab_dir: PathBuf,
}

/// Accept either a training output directory (vocabulary dumps plus a
/// `final/` leaf) or a single leaf checkpoint such as `step-500/`, whose
/// vocabulary then sits in the parent.
pub fn resolve_checkpoint(dir: &Path) -> Result<CheckpointDirs, Failure> {
    let meta_here = dir.join("meta.json").is_file();
    let meta_final = dir.join("final").join("meta.json").is_file();
    if meta_final {
        return Ok(CheckpointDirs {
            leaf: dir.join("final"),
            vocab_dir: dir.to_path_buf(),
        });
    }
    if meta_here {
        let vocab_dir = if dir.join("entities.tsv").is_file() {
            dir.to_path_buf()
        } else {
            dir.parent().map(Path::to_path_buf).unwrap_or_else(|| dir.to_path_buf())
        };
        return Ok(CheckpointDirs {
            leaf: dir.to_path_buf(),
            vocab_dir,
        });
    }
    Err(Failure::usage(format!(
        "{} is not a checkpoint: expected meta.json or final/meta.json",
        dir.display()
    )))
}

/// Read the `entities.tsv` / `relations.tsv` dumps written by `train`.
pub fn load_vocab_dumps(dir: &Path) -> Result<(Arc<Vocabulary>, Arc<Vocabulary>), Failure> {
    let read = |name: &str| -> Result<Arc<Vocabulary>, Failure> {
        let path = dir.join(name);
        Vocabulary::read_tsv(&path)
            .map(Arc::new)
            .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
    };
    Ok((read("entities.tsv")?, read("relations.tsv")?))
}

/// Resolve `--relations` (comma-separated labels) to ids. Without the flag,
/// fall back to whichever of the standard treatment relations — or a plain
/// `treats` — the vocabulary contains.
pub fn relation_ids_for(
    names: Option<&str>,
    relations: &Vocabulary,
) -> Result<Vec<RelationId>, Failure> {
    match names {
        Some(list) => {
            let mut ids = Vec::new();
            for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                match relations.get(name) {
                    Some(id) => ids.push(RelationId(id)),
                    None => {
                        return Err(Failure::usage(format!(
                            "unknown relation `{name}`; the vocabulary has: {}",
                            relations.labels().join(", ")
                        )))
                    }
                }
            }
            if ids.is_empty() {
                return Err(Failure::usage("--relations lists no relation labels"));
            }
            Ok(ids)
        }
        None => {
            let mut ids: Vec<RelationId> = DEFAULT_TREATMENT_RELATIONS
                .iter()
                .chain(std::iter::once(&"treats"))
                .filter_map(|label| relations.get(label).map(RelationId))
                .collect();
            ids.dedup();
            if ids.is_empty() {
                return Err(Failure::usage(format!(
                    "no treatment relation found in the vocabulary; pass --relations \
                     (available: {})",
                    relations.labels().join(", ")
                )));
            }
            Ok(ids)
        }
    }
}

/// Candidate pool for ranking: one `--pool-type` entity-type pool, or every
/// entity when the flag is absent.
pub fn candidate_pool(
    pool_type: Option<&str>,
    entities: &Vocabulary,
) -> Result<Vec<EntityId>, Failure> {
    match pool_type {
        Some(t) => {
            let index = anchored_kge::kg::build_type_index(entities)
                .map_err(|e| Failure::usage(e.to_string()))?;
            match index.pool(t) {
                Some(pool) => Ok(pool.to_vec()),
                None => Err(Failure::usage(format!(
                    "no entities of type `{t}`; available types: {}",
                    index.types().collect::<Vec<_>>().join(", ")
                ))),
            }
        }
        None => Ok((0..entities.len() as u32).map(EntityId).collect()),
    }
}

/// Parse a comma-separated list of ratios in [0, 1].
pub fn parse_ratios(list: &str) -> Result<Vec<f64>, Failure> {
    let mut out = Vec::new();
    for piece in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let r: f64 = piece
            .parse()
            .map_err(|_| Failure::usage(format!("`{piece}` is not a number")))?;
        if !(0.0..=1.0).contains(&r) {
            return Err(Failure::usage(format!("ratio {r} is outside [0, 1]")));
        }
        out.push(r);
    }
    if out.is_empty() {
        return Err(Failure::usage("no ratios given"));
    }
    Ok(out)
}

/// Shared exit-code mapping for training errors: configuration and data
/// problems are usage errors, divergence gets its dedicated code, the rest
/// is internal.
pub fn map_train_err(e: TrainError) -> Failure {
    match e {
        TrainError::BadConfig(_) | TrainError::EmptyDataset | TrainError::AnchorShape { .. } => {
            Failure::usage(e.to_string())
        }
        TrainError::Diverged {
            step,
            batch_index,
            ref last_checkpoint,
        } => {
            let at = match last_checkpoint {
                Some(path) => path.display().to_string(),
                None => "none".to_string(),
            };
            Failure::diverged(format!(
                "training diverged at step {step} (batch {batch_index}); last checkpoint: {at}"
            ))
        }
        other => Failure::internal(other.to_string()),
    }
}
