//! Controlled corruption of a training graph — deleting or injecting
//! fractions of triples — and the robustness grid that retrains and
//! re-evaluates a model at every noise level.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{evaluate, EvalError, EvalProtocol, MetricsReport};
use crate::kg::{EntityId, KgError, Triple, TripleSet};
use crate::kge::{init_params, Init, ModelKind, ModelParams};
use crate::matrix::{Matrix, Scalar};
use crate::train::{train, TrainConfig, TrainError, TrainOptions};

#[derive(Debug, Error)]
pub enum PerturbError {
    #[error("perturbation ratio must lie in [0, 1], got {0}")]
    BadRatio(f64),
    #[error("delete ratio must be < 1 (deleting every triple leaves nothing to train on)")]
    DeleteEverything,
    #[error(
        "graph cannot absorb {requested} noise triples: only {available} novel triples exist"
    )]
    NotEnoughRoom { requested: usize, available: u128 },
    #[error(
        "noise saturation: {added} of {requested} triples added before the rejection budget ran out"
    )]
    Saturated { requested: usize, added: usize },
    #[error(transparent)]
    Kg(#[from] KgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerturbKind {
    Delete,
    Add,
}

impl std::fmt::Display for PerturbKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PerturbKind::Delete => "delete",
            PerturbKind::Add => "add",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbSpec {
    pub kind: PerturbKind,
    pub ratio: f64,
    pub seed: u64,
}

impl PerturbSpec {
    pub fn new(kind: PerturbKind, ratio: f64, seed: u64) -> Self {
        PerturbSpec { kind, ratio, seed }
    }

    fn check_ratio(&self) -> Result<(), PerturbError> {
        if !(0.0..=1.0).contains(&self.ratio) || !self.ratio.is_finite() {
            return Err(PerturbError::BadRatio(self.ratio));
        }
        Ok(())
    }
}

/// Number of triples a ratio maps to: `floor(ratio * |D|)`.
fn budget(ratio: f64, len: usize) -> usize {
    (ratio * len as f64).floor() as usize
}

/// Uniformly remove `floor(ratio * |D|)` training triples without
/// replacement; survivors keep their original order and vocabularies
/// (entities may become isolated).
pub fn delete_fraction(train: &TripleSet, spec: &PerturbSpec) -> Result<TripleSet, PerturbError> {
    debug_assert_eq!(spec.kind, PerturbKind::Delete);
    spec.check_ratio()?;
    if spec.ratio >= 1.0 {
        return Err(PerturbError::DeleteEverything);
    }
    let remove = budget(spec.ratio, train.len());
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let removed: HashSet<usize> = rand::seq::index::sample(&mut rng, train.len(), remove)
        .iter()
        .collect();
    let survivors: Vec<Triple> = train
        .triples()
        .iter()
        .enumerate()
        .filter(|(i, _)| !removed.contains(i))
        .map(|(_, &t)| t)
        .collect();
    Ok(train.with_triples(survivors, train.split())?)
}

/// Slot-choice counts from one [`add_noise`] run, for distribution checks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AddStats {
    pub head_corrupted: usize,
    pub tail_corrupted: usize,
    pub rejections: usize,
}

/// Add `floor(ratio * |D|)` noise triples: each samples an existing training
/// triple, replaces its head or tail (fair coin) with a uniform entity, and
/// is rejected if the result already exists in the original or added set.
pub fn add_noise(train: &TripleSet, spec: &PerturbSpec) -> Result<TripleSet, PerturbError> {
    let need = budget(spec.ratio, train.len());
    // Generous cap: on sparse graphs almost every attempt is accepted.
    add_noise_with_budget(train, spec, need.saturating_mul(1000).max(10_000))
        .map(|(set, _)| set)
}

/// [`add_noise`] with an explicit cap on the total number of corruption
/// attempts, returning slot statistics alongside the perturbed set.
pub fn add_noise_with_budget(
    train: &TripleSet,
    spec: &PerturbSpec,
    max_attempts: usize,
) -> Result<(TripleSet, AddStats), PerturbError> {
    debug_assert_eq!(spec.kind, PerturbKind::Add);
    spec.check_ratio()?;
    let need = budget(spec.ratio, train.len());
    let entities = train.entity_count() as u128;
    let capacity = entities * entities * train.relation_count() as u128 - train.len() as u128;
    if capacity < need as u128 {
        return Err(PerturbError::NotEnoughRoom {
            requested: need,
            available: capacity,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut triples = train.triples().to_vec();
    let mut seen: HashSet<Triple> = triples.iter().copied().collect();
    let mut stats = AddStats::default();
    let mut attempts = 0usize;
    while triples.len() - train.len() < need {
        if attempts >= max_attempts {
            return Err(PerturbError::Saturated {
                requested: need,
                added: triples.len() - train.len(),
            });
        }
        attempts += 1;
        let base = train.triples()[rng.random_range(0..train.len())];
        let corrupt_head = rng.random_range(0..2u8) == 0;
        let replacement = EntityId(rng.random_range(0..train.entity_count() as u32));
        let candidate = if corrupt_head {
            Triple {
                head: replacement,
                ..base
            }
        } else {
            Triple {
                tail: replacement,
                ..base
            }
        };
        if seen.insert(candidate) {
            triples.push(candidate);
            if corrupt_head {
                stats.head_corrupted += 1;
            } else {
                stats.tail_corrupted += 1;
            }
        } else {
            stats.rejections += 1;
        }
    }
    Ok((train.with_triples(triples, train.split())?, stats))
}

/// One robustness-grid cell result. `kind` is `None` for the unperturbed
/// baseline row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRow {
    pub kind: Option<PerturbKind>,
    pub ratio: f64,
    pub metrics: Option<MetricsReport>,
    /// `"ok"` or the error that aborted the cell.
    pub status: String,
}

impl RobustnessRow {
    /// The `kind` CSV cell: the perturbation kind, or `baseline`.
    pub fn label(&self) -> String {
        match self.kind {
            Some(k) => k.to_string(),
            None => "baseline".to_string(),
        }
    }
}

/// Seeds, sizes and hashes that make a suite run reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteProvenance {
    pub model_kind: String,
    pub config_hash: String,
    pub train_size: usize,
    pub valid_size: usize,
    pub test_size: usize,
    pub train_seed: u64,
    pub protocol_seed: u64,
    pub protocol_trials: u32,
    pub num_negatives: usize,
    pub grid: Vec<PerturbSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessMatrix {
    pub rows: Vec<RobustnessRow>,
    pub provenance: SuiteProvenance,
}

impl RobustnessMatrix {
    /// `kind,ratio,mr,mrr,h1,h3,h10,auc,status`; failed cells leave the
    /// metric columns empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,ratio,mr,mrr,h1,h3,h10,auc,status\n");
        for row in &self.rows {
            let metrics = match &row.metrics {
                Some(m) => [m.mr, m.mrr, m.hits[&1], m.hits[&3], m.hits[&10], m.auc]
                    .map(crate::eval::fmt_metric)
                    .join(","),
                None => ",,,,,".to_string(),
            };
            let status = row.status.replace(',', ";");
            out.push_str(&format!(
                "{},{},{},{}\n",
                row.label(),
                row.ratio,
                metrics,
                status
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("matrix serializes") + "\n"
    }
}

/// Train and evaluate once per grid cell, plus an unperturbed baseline row
/// (always first). Every cell retrains from scratch on its perturbed
/// training set — anchored initialization when `anchors` is given, random
/// otherwise — and is evaluated with the shared protocol, so rows differ
/// only in the training data. Failed cells are recorded, not fatal.
/// `valid` is untouched (perturbation applies to training data only) and
/// enters the provenance block.
#[allow(clippy::too_many_arguments)]
pub fn robustness_suite<T: Scalar>(
    train_set: &TripleSet,
    valid: &TripleSet,
    test: &TripleSet,
    anchors: Option<&Matrix<T>>,
    kind: ModelKind,
    config: &TrainConfig,
    protocol: &EvalProtocol,
    grid: &[PerturbSpec],
) -> RobustnessMatrix {
    let mut rows = Vec::with_capacity(grid.len() + 1);
    rows.push(run_cell(train_set, None, 0.0, test, anchors, kind, config, protocol));
    for spec in grid {
        let perturbed = match spec.kind {
            PerturbKind::Delete => delete_fraction(train_set, spec),
            PerturbKind::Add => add_noise(train_set, spec),
        };
        rows.push(match perturbed {
            Ok(set) => run_cell(
                &set,
                Some(spec.kind),
                spec.ratio,
                test,
                anchors,
                kind,
                config,
                protocol,
            ),
            Err(e) => RobustnessRow {
                kind: Some(spec.kind),
                ratio: spec.ratio,
                metrics: None,
                status: format!("failed: {e}"),
            },
        });
    }
    RobustnessMatrix {
        rows,
        provenance: SuiteProvenance {
            model_kind: kind.to_string(),
            config_hash: config.content_hash(),
            train_size: train_set.len(),
            valid_size: valid.len(),
            test_size: test.len(),
            train_seed: config.seed,
            protocol_seed: protocol.seed,
            protocol_trials: protocol.trials,
            num_negatives: protocol.num_negatives,
            grid: grid.to_vec(),
        },
    }
}

#[allow(clippy::too_many_arguments)]
fn run_cell<T: Scalar>(
    train_set: &TripleSet,
    cell_kind: Option<PerturbKind>,
    ratio: f64,
    test: &TripleSet,
    anchors: Option<&Matrix<T>>,
    kind: ModelKind,
    config: &TrainConfig,
    protocol: &EvalProtocol,
) -> RobustnessRow {
    let row = |metrics: Option<MetricsReport>, status: String| RobustnessRow {
        kind: cell_kind,
        ratio,
        metrics,
        status,
    };
    let outcome: Result<MetricsReport, String> = (|| {
        let init = match anchors {
            Some(a) => Init::TextAnchored {
                anchors: a,
                seed: config.seed,
            },
            None => Init::Random { seed: config.seed },
        };
        let initial: ModelParams<T> = init_params(
            train_set.entity_count(),
            train_set.relation_count(),
            config.dim,
            kind,
            config.gamma,
            init,
        )
        .map_err(|e| e.to_string())?;
        let trained = train(train_set, anchors, initial, config, &TrainOptions::default())
            .map_err(|e: TrainError| e.to_string())?;
        evaluate(&trained.params, test, protocol).map_err(|e: EvalError| e.to_string())
    })();
    match outcome {
        Ok(metrics) => row(Some(metrics), "ok".to_string()),
        Err(message) => row(None, format!("failed: {message}")),
    }
}
