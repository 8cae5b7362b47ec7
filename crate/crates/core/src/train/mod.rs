//! Mini-batch optimization of the joint objective
//! `L = zeta1 * anchor + zeta2 * link` with uniform negative sampling,
//! sparse per-row updates, and checkpointing.
//!
//! Determinism contract: with `threads = 1` and a fixed seed, every run is
//! bitwise identical — gradients are accumulated in `BTreeMap`s (stable row
//! order), batch shuffling and negative sampling use dedicated ChaCha
//! streams, and all arithmetic is f64 regardless of storage precision.
//! `threads > 1` switches to lock-free racy updates (hogwild): workers apply
//! sparse link-gradient updates concurrently without synchronization,
//! accepting benign races on shared rows; results are then only
//! metrics-equivalent, not bitwise.

mod config;
mod loss;
mod sampling;

pub use config::{AnchorDistance, CorruptionSide, OptimizerKind, TrainConfig};
pub use loss::{
    anchor_loss_and_grads, link_loss_dneg, link_loss_dpos, link_loss_from_scores, sigmoid,
    softplus, LossBreakdown,
};
pub use sampling::{sample_negatives, NegativeBatch};

use std::cell::UnsafeCell;
use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::kg::{EntityId, Triple, TripleSet};
use crate::kge::{
    save_checkpoint, score, score_gradients, wrap_phase, KgeError, ModelKind, ModelParams,
};
use crate::matrix::{Matrix, Scalar};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    BadConfig(String),
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error(
        "anchor table is {found_rows}x{found_cols}, expected {expected_rows}x{expected_cols}"
    )]
    AnchorShape {
        expected_rows: usize,
        expected_cols: usize,
        found_rows: usize,
        found_cols: usize,
    },
    /// Non-finite loss or gradient. `last_checkpoint` is the most recent
    /// checkpoint written before the divergence, if any.
    #[error("non-finite loss or gradient at step {step} (batch item {batch_index})")]
    Diverged {
        step: u64,
        batch_index: usize,
        last_checkpoint: Option<PathBuf>,
    },
    #[error(transparent)]
    Kge(#[from] KgeError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Per-row Adagrad accumulators (scalar per row, the sparse-embedding
/// convention): `acc += mean_j(g_j^2)`, update `w_j -= lr * g_j / (sqrt(acc) + 1e-10)`.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    entity_acc: Vec<f64>,
    relation_acc: Vec<f64>,
}

const ADAGRAD_EPS: f64 = 1e-10;

impl OptimizerState {
    pub fn new(entity_rows: usize, relation_rows: usize) -> Self {
        OptimizerState {
            entity_acc: vec![0.0; entity_rows],
            relation_acc: vec![0.0; relation_rows],
        }
    }

    pub fn entity_accumulator(&self, row: usize) -> f64 {
        self.entity_acc[row]
    }

    pub fn relation_accumulator(&self, row: usize) -> f64 {
        self.relation_acc[row]
    }
}

fn add_scaled(map: &mut BTreeMap<u32, Vec<f64>>, row: u32, grad: &[f64], weight: f64) {
    let entry = map
        .entry(row)
        .or_insert_with(|| vec![0.0; grad.len()]);
    for (e, g) in entry.iter_mut().zip(grad) {
        *e += weight * g;
    }
}

fn apply_row_update<T: Scalar>(
    row: &mut [T],
    acc: &mut f64,
    grad: &[f64],
    learning_rate: f64,
    optimizer: OptimizerKind,
) {
    match optimizer {
        OptimizerKind::Sgd => {
            for (w, g) in row.iter_mut().zip(grad) {
                *w = T::from_f64(w.to_f64() - learning_rate * g);
            }
        }
        OptimizerKind::Adagrad => {
            let mean_sq = grad.iter().map(|g| g * g).sum::<f64>() / grad.len() as f64;
            *acc += mean_sq;
            let denom = acc.sqrt() + ADAGRAD_EPS;
            for (w, g) in row.iter_mut().zip(grad) {
                *w = T::from_f64(w.to_f64() - learning_rate * g / denom);
            }
        }
    }
}

/// Unique entities referenced by a positive batch (heads and tails), in
/// ascending id order — the set the anchor term averages over.
pub fn batch_entities(positives: &[Triple]) -> Vec<EntityId> {
    let set: BTreeSet<EntityId> = positives
        .iter()
        .flat_map(|t| [t.head, t.tail])
        .collect();
    set.into_iter().collect()
}

/// One gradient step on `positives` + `negatives`. Touches exactly the rows
/// referenced by the batch; optimizer state updates only for touched rows;
/// RotatE phases are wrapped into `(-pi, pi]` after the update. The anchor
/// term is skipped entirely when `zeta1 == 0` or `anchors` is `None`, the
/// link term when `zeta2 == 0` (the corresponding loss reads 0).
pub fn train_step<T: Scalar>(
    params: &mut ModelParams<T>,
    opt: &mut OptimizerState,
    positives: &[Triple],
    negatives: &NegativeBatch,
    anchors: Option<&Matrix<T>>,
    config: &TrainConfig,
) -> Result<LossBreakdown, TrainError> {
    assert_eq!(
        positives.len(),
        negatives.negatives.len(),
        "one negative row per positive"
    );
    if config.threads > 1 {
        return train_step_hogwild(params, opt, positives, negatives, anchors, config);
    }

    let mut entity_grads: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    let mut relation_grads: BTreeMap<u32, Vec<f64>> = BTreeMap::new();

    let link_total = if config.zeta2 != 0.0 {
        accumulate_link_gradients(
            params,
            positives,
            negatives,
            config,
            &mut entity_grads,
            &mut relation_grads,
        )
    } else {
        0.0
    };

    let anchor_total = match anchors {
        Some(anchors) if config.zeta1 != 0.0 => {
            let ids = batch_entities(positives);
            let (value, grads) =
                anchor_loss_and_grads(&params.entities, anchors, &ids, config.anchor_distance);
            for (slot, e) in ids.iter().enumerate() {
                add_scaled(&mut entity_grads, e.0, &grads[slot], config.zeta1);
            }
            value
        }
        _ => 0.0,
    };

    let breakdown = LossBreakdown::compose(config.zeta1, anchor_total, config.zeta2, link_total);
    check_finite(&breakdown, &entity_grads, &relation_grads)?;

    for (&row, grad) in &entity_grads {
        apply_row_update(
            params.entities.row_mut(row as usize),
            &mut opt.entity_acc[row as usize],
            grad,
            config.learning_rate,
            config.optimizer,
        );
    }
    let is_rotate = matches!(params.kind, ModelKind::RotatE);
    for (&row, grad) in &relation_grads {
        let r = params.relations.row_mut(row as usize);
        apply_row_update(
            r,
            &mut opt.relation_acc[row as usize],
            grad,
            config.learning_rate,
            config.optimizer,
        );
        if is_rotate {
            for phase in r.iter_mut() {
                *phase = T::from_f64(wrap_phase(phase.to_f64()));
            }
        }
    }

    Ok(breakdown)
}

/// Link-loss gradients for a slice of positives, weighted by `zeta2 / batch`;
/// returns the mean link loss over the slice positives (unweighted).
/// `batch_weight` divides per-positive gradients (the full batch size, even
/// when `positives` is one hogwild chunk).
fn accumulate_link_gradients<T: Scalar>(
    params: &ModelParams<T>,
    positives: &[Triple],
    negatives: &NegativeBatch,
    config: &TrainConfig,
    entity_grads: &mut BTreeMap<u32, Vec<f64>>,
    relation_grads: &mut BTreeMap<u32, Vec<f64>>,
) -> f64 {
    let batch = positives.len() as f64;
    let mut link_total = 0.0;
    for (i, positive) in positives.iter().enumerate() {
        let negs = &negatives.negatives[i];
        let f_pos = score(params, positive.head, positive.relation, positive.tail);
        let neg_scores: Vec<f64> = negs
            .iter()
            .map(|n| score(params, n.head, n.relation, n.tail))
            .collect();
        link_total += link_loss_from_scores(f_pos, &neg_scores, config.gamma);

        let w_pos = config.zeta2 * link_loss_dpos(f_pos, config.gamma) / batch;
        let g = score_gradients(params, positive.head, positive.relation, positive.tail);
        add_scaled(entity_grads, positive.head.0, &g.dh, w_pos);
        add_scaled(relation_grads, positive.relation.0, &g.dr, w_pos);
        add_scaled(entity_grads, positive.tail.0, &g.dt, w_pos);

        for (negative, &f_neg) in negs.iter().zip(&neg_scores) {
            let w_neg =
                config.zeta2 * link_loss_dneg(f_neg, config.gamma, negs.len()) / batch;
            let g = score_gradients(params, negative.head, negative.relation, negative.tail);
            add_scaled(entity_grads, negative.head.0, &g.dh, w_neg);
            add_scaled(relation_grads, negative.relation.0, &g.dr, w_neg);
            add_scaled(entity_grads, negative.tail.0, &g.dt, w_neg);
        }
    }
    link_total / batch
}

fn check_finite(
    breakdown: &LossBreakdown,
    entity_grads: &BTreeMap<u32, Vec<f64>>,
    relation_grads: &BTreeMap<u32, Vec<f64>>,
) -> Result<(), TrainError> {
    let diverged = |batch_index: usize| TrainError::Diverged {
        step: 0,
        batch_index,
        last_checkpoint: None,
    };
    if !breakdown.total.is_finite()
        || !breakdown.link_loss.is_finite()
        || !breakdown.anchor_loss.is_finite()
    {
        return Err(diverged(0));
    }
    for grads in [entity_grads, relation_grads] {
        for (i, (_, g)) in grads.iter().enumerate() {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(diverged(i));
            }
        }
    }
    Ok(())
}

/// Racy parallel variant: the link phase is split into contiguous chunks of
/// positives, one worker each, all applying updates to the shared tables
/// without locks. The anchor term stays serial (it is one cheap pass and
/// its mean couples all batch entities). Data races on f32 cells are
/// intentional and benign for SGD-style updates; this mode trades the
/// bitwise-reproducibility contract for throughput.
fn train_step_hogwild<T: Scalar>(
    params: &mut ModelParams<T>,
    opt: &mut OptimizerState,
    positives: &[Triple],
    negatives: &NegativeBatch,
    anchors: Option<&Matrix<T>>,
    config: &TrainConfig,
) -> Result<LossBreakdown, TrainError> {
    struct Racy<'c, 'p, T: Scalar>(&'c UnsafeCell<HogwildTables<'p, T>>);
    unsafe impl<T: Scalar> Sync for Racy<'_, '_, T> {}
    struct HogwildTables<'a, T: Scalar> {
        params: &'a mut ModelParams<T>,
        opt: &'a mut OptimizerState,
    }

    let batch = positives.len() as f64;
    let threads = config.threads.min(positives.len().max(1));
    let chunk = positives.len().div_ceil(threads);
    let kind = params.kind;

    let cell = UnsafeCell::new(HogwildTables { params, opt });
    let racy = Racy(&cell);

    let link_total: f64 = std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for (chunk_index, chunk_positives) in positives.chunks(chunk).enumerate() {
            let chunk_negatives = NegativeBatch {
                negatives: negatives.negatives[chunk_index * chunk..]
                    [..chunk_positives.len()]
                    .to_vec(),
            };
            let racy = &racy;
            handles.push(scope.spawn(move || {
                let mut entity_grads = BTreeMap::new();
                let mut relation_grads = BTreeMap::new();
                // Read the shared tables racily while other workers write.
                let tables = unsafe { &*racy.0.get() };
                let mut chunk_loss = accumulate_link_gradients(
                    tables.params,
                    chunk_positives,
                    &chunk_negatives,
                    config,
                    &mut entity_grads,
                    &mut relation_grads,
                );
                // The helper divides by the chunk length; re-scale so every
                // worker's gradients carry the full-batch 1/B factor.
                let rescale = chunk_positives.len() as f64 / batch;
                chunk_loss *= chunk_positives.len() as f64;
                for grads in [&mut entity_grads, &mut relation_grads] {
                    for g in grads.values_mut() {
                        for v in g.iter_mut() {
                            *v *= rescale;
                        }
                    }
                }
                let tables = unsafe { &mut *racy.0.get() };
                for (&row, grad) in &entity_grads {
                    apply_row_update(
                        tables.params.entities.row_mut(row as usize),
                        &mut tables.opt.entity_acc[row as usize],
                        grad,
                        config.learning_rate,
                        config.optimizer,
                    );
                }
                let is_rotate = matches!(kind, ModelKind::RotatE);
                for (&row, grad) in &relation_grads {
                    let r = tables.params.relations.row_mut(row as usize);
                    apply_row_update(
                        r,
                        &mut tables.opt.relation_acc[row as usize],
                        grad,
                        config.learning_rate,
                        config.optimizer,
                    );
                    if is_rotate {
                        for phase in r.iter_mut() {
                            *phase = T::from_f64(wrap_phase(phase.to_f64()));
                        }
                    }
                }
                chunk_loss
            }));
        }
        handles.into_iter().map(|h| h.join().unwrap()).sum::<f64>()
    }) / batch;

    drop(racy);
    let HogwildTables { params, opt } = cell.into_inner();

    let anchor_total = match anchors {
        Some(anchors) if config.zeta1 != 0.0 => {
            let ids = batch_entities(positives);
            let (value, grads) =
                anchor_loss_and_grads(&params.entities, anchors, &ids, config.anchor_distance);
            let mut entity_grads = BTreeMap::new();
            for (slot, e) in ids.iter().enumerate() {
                add_scaled(&mut entity_grads, e.0, &grads[slot], config.zeta1);
            }
            for (&row, grad) in &entity_grads {
                if grad.iter().any(|v| !v.is_finite()) {
                    return Err(TrainError::Diverged {
                        step: 0,
                        batch_index: 0,
                        last_checkpoint: None,
                    });
                }
                apply_row_update(
                    params.entities.row_mut(row as usize),
                    &mut opt.entity_acc[row as usize],
                    grad,
                    config.learning_rate,
                    config.optimizer,
                );
            }
            value
        }
        _ => 0.0,
    };

    let breakdown = LossBreakdown::compose(config.zeta1, anchor_total, config.zeta2, link_total);
    if !breakdown.total.is_finite() {
        return Err(TrainError::Diverged {
            step: 0,
            batch_index: 0,
            last_checkpoint: None,
        });
    }
    Ok(breakdown)
}

/// One training-log row; `wallclock_ms` is cumulative since training start.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub step: u64,
    pub link_loss: f64,
    pub anchor_loss: f64,
    pub total_loss: f64,
    pub wallclock_ms: u128,
}

/// Render log rows as the training-log CSV.
pub fn log_to_csv(rows: &[LogRow]) -> String {
    let mut out = String::from("step,link_loss,anchor_loss,total_loss,wallclock_ms\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.step, r.link_loss, r.anchor_loss, r.total_loss, r.wallclock_ms
        ));
    }
    out
}

/// Side-channel settings for [`train`] that are not hyperparameters.
#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Write periodic + final checkpoints under this directory.
    pub checkpoint_dir: Option<PathBuf>,
    /// Recorded in checkpoint metadata.
    pub vocab_hash: String,
    pub config_hash: String,
}

#[derive(Debug)]
pub struct TrainOutcome<T: Scalar> {
    pub params: ModelParams<T>,
    pub log: Vec<LogRow>,
    /// Path of the final checkpoint, when a checkpoint dir was configured.
    pub last_checkpoint: Option<PathBuf>,
}

/// Run `config.steps` train steps over seeded-shuffled batches of `dataset`.
///
/// `initial` provides the starting tables (random or text-anchored);
/// `anchors` feeds the anchor loss and must cover every entity when
/// `zeta1 > 0`. Fully deterministic for `threads = 1` and a fixed seed.
/// On divergence the error carries the last checkpoint written, and any
/// periodic checkpoints stay on disk.
pub fn train<T: Scalar>(
    dataset: &TripleSet,
    anchors: Option<&Matrix<T>>,
    initial: ModelParams<T>,
    config: &TrainConfig,
    options: &TrainOptions,
) -> Result<TrainOutcome<T>, TrainError> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let entity_count = dataset.entity_count();
    if config.zeta1 > 0.0 {
        match anchors {
            None => {
                return Err(TrainError::BadConfig(
                    "zeta1 > 0 requires an anchor table (or pass zeta1 = 0 / --no-anchor)"
                        .to_string(),
                ))
            }
            Some(a) => {
                if a.rows() != entity_count || a.cols() != initial.entity_dim() {
                    return Err(TrainError::AnchorShape {
                        expected_rows: entity_count,
                        expected_cols: initial.entity_dim(),
                        found_rows: a.rows(),
                        found_cols: a.cols(),
                    });
                }
            }
        }
    }

    let mut params = initial;
    let mut opt = OptimizerState::new(params.entity_count(), params.relation_count());

    // Dedicated streams: 1 = batch shuffling, 2 = negative sampling.
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    shuffle_rng.set_stream(1);
    let mut negative_rng = ChaCha8Rng::seed_from_u64(config.seed);
    negative_rng.set_stream(2);

    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut cursor = order.len(); // force a shuffle before the first batch
    let start = Instant::now();
    let mut log = Vec::new();
    let mut last_checkpoint: Option<PathBuf> = None;

    let save = |params: &ModelParams<T>,
                    step: u64,
                    name: &str,
                    last: &mut Option<PathBuf>|
     -> Result<(), TrainError> {
        if let Some(dir) = &options.checkpoint_dir {
            let path = dir.join(name);
            save_checkpoint(&path, params, step, &options.vocab_hash, &options.config_hash)?;
            *last = Some(path);
        }
        Ok(())
    };

    for step in 1..=config.steps {
        let mut batch = Vec::with_capacity(config.batch_size.min(dataset.len()));
        for _ in 0..config.batch_size {
            if cursor == order.len() {
                order.shuffle(&mut shuffle_rng);
                cursor = 0;
            }
            batch.push(dataset.triples()[order[cursor]]);
            cursor += 1;
        }
        let negatives = sample_negatives(
            &batch,
            entity_count,
            config.neg_per_pos,
            config.corruption_side,
            config.filter_negatives.then_some(dataset),
            &mut negative_rng,
        );
        let breakdown = train_step(&mut params, &mut opt, &batch, &negatives, anchors, config)
            .map_err(|e| match e {
                TrainError::Diverged {
                    batch_index, ..
                } => TrainError::Diverged {
                    step,
                    batch_index,
                    last_checkpoint: last_checkpoint.clone(),
                },
                other => other,
            })?;

        if step % config.log_every == 0 || step == config.steps {
            log.push(LogRow {
                step,
                link_loss: breakdown.link_loss,
                anchor_loss: breakdown.anchor_loss,
                total_loss: breakdown.total,
                wallclock_ms: start.elapsed().as_millis(),
            });
        }
        if config.checkpoint_every > 0 && step % config.checkpoint_every == 0 {
            save(&params, step, &format!("step-{step}"), &mut last_checkpoint)?;
        }
    }

    save(&params, config.steps, "final", &mut last_checkpoint)?;
    Ok(TrainOutcome {
        params,
        log,
        last_checkpoint,
    })
}
