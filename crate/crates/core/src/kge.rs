//! Embedding models: TransE, DistMult, and RotatE score functions with
//! analytic gradients, parameter initialization, and checkpointing.
//!
//! All models share one orientation: the score is a dissimilarity, so lower
//! means more plausible. DistMult's raw bilinear form is negated to fit this
//! convention. Scores and gradients are always accumulated in f64 regardless
//! of the storage scalar; production tables store f32, oracle tests use f64
//! end to end.
//!
//! RotatE layout: an entity row of width `k` (even) holds `k/2` complex
//! components as `[re_0.., re_{m-1}, im_0.., im_{m-1}]`; a relation row holds
//! `m = k/2` phases, so every implied rotation has modulus exactly 1.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{EntityId, RelationId, Triple};
use crate::matrix::{Matrix, Scalar};
use crate::vecio;

#[derive(Debug, Error)]
pub enum KgeError {
    #[error("anchor table is {found_rows}x{found_cols}, expected {expected_rows}x{expected_cols}")]
    AnchorShape {
        expected_rows: usize,
        expected_cols: usize,
        found_rows: usize,
        found_cols: usize,
    },
    #[error("RotatE requires an even entity dimension, got {0}")]
    OddRotateDim(usize),
    #[error("gamma must be positive, got {0}")]
    BadGamma(f64),
    #[error("unknown model kind `{0}` (expected transe-l1, transe-l2, distmult, or rotate)")]
    UnknownKind(String),
    #[error("non-finite parameter in the {table} table")]
    NonFinite { table: &'static str },
    #[error(
        "checkpoint {path}: {table} table is {found_rows}x{found_cols}, metadata implies {expected_rows}x{expected_cols}"
    )]
    CheckpointShape {
        path: String,
        table: &'static str,
        expected_rows: usize,
        expected_cols: usize,
        found_rows: usize,
        found_cols: usize,
    },
    #[error(transparent)]
    VecIo(#[from] vecio::VecIoError),
    #[error("checkpoint metadata: {0}")]
    Metadata(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which score function the parameter tables belong to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum ModelKind {
    /// Translation model with p-norm 1 or 2.
    TransE { p: u8 },
    DistMult,
    RotatE,
}

impl ModelKind {
    /// Relation-row width implied by entity dimension `k`: `k/2` phases for
    /// RotatE, `k` reals otherwise.
    pub fn relation_dim(&self, entity_dim: usize) -> usize {
        match self {
            ModelKind::RotatE => entity_dim / 2,
            _ => entity_dim,
        }
    }

    pub fn check_dim(&self, entity_dim: usize) -> Result<(), KgeError> {
        if matches!(self, ModelKind::RotatE) && entity_dim % 2 != 0 {
            return Err(KgeError::OddRotateDim(entity_dim));
        }
        Ok(())
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelKind::TransE { p } => write!(f, "transe-l{p}"),
            ModelKind::DistMult => f.write_str("distmult"),
            ModelKind::RotatE => f.write_str("rotate"),
        }
    }
}

impl FromStr for ModelKind {
    type Err = KgeError;

    fn from_str(s: &str) -> Result<Self, KgeError> {
        match s.to_ascii_lowercase().as_str() {
            "transe" | "transe-l1" => Ok(ModelKind::TransE { p: 1 }),
            "transe-l2" => Ok(ModelKind::TransE { p: 2 }),
            "distmult" => Ok(ModelKind::DistMult),
            "rotate" => Ok(ModelKind::RotatE),
            other => Err(KgeError::UnknownKind(other.to_string())),
        }
    }
}

impl From<ModelKind> for String {
    fn from(k: ModelKind) -> String {
        k.to_string()
    }
}

impl TryFrom<String> for ModelKind {
    type Error = KgeError;
    fn try_from(s: String) -> Result<Self, KgeError> {
        s.parse()
    }
}

/// Dense embedding tables plus the margin hyperparameter.
#[derive(Debug, Clone)]
pub struct ModelParams<T: Scalar> {
    pub kind: ModelKind,
    pub gamma: f64,
    pub entities: Matrix<T>,
    pub relations: Matrix<T>,
}

impl<T: Scalar> ModelParams<T> {
    pub fn entity_dim(&self) -> usize {
        self.entities.cols()
    }

    pub fn entity_count(&self) -> usize {
        self.entities.rows()
    }

    pub fn relation_count(&self) -> usize {
        self.relations.rows()
    }

    /// Check all structural invariants: positive gamma, consistent table
    /// widths, finite entries.
    pub fn validate(&self) -> Result<(), KgeError> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(KgeError::BadGamma(self.gamma));
        }
        self.kind.check_dim(self.entity_dim())?;
        let want_rel = self.kind.relation_dim(self.entity_dim());
        if self.relations.cols() != want_rel {
            return Err(KgeError::CheckpointShape {
                path: String::new(),
                table: "relation",
                expected_rows: self.relations.rows(),
                expected_cols: want_rel,
                found_rows: self.relations.rows(),
                found_cols: self.relations.cols(),
            });
        }
        if !self.entities.all_finite() {
            return Err(KgeError::NonFinite { table: "entity" });
        }
        if !self.relations.all_finite() {
            return Err(KgeError::NonFinite { table: "relation" });
        }
        Ok(())
    }

    /// Convert storage precision (used to run the f64 oracle path against
    /// production f32 tables).
    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            kind: self.kind,
            gamma: self.gamma,
            entities: self.entities.cast(),
            relations: self.relations.cast(),
        }
    }
}

/// How [`init_params`] fills the tables.
pub enum Init<'a, T: Scalar> {
    /// Entities and relations uniform in `[-(gamma+2)/k, +(gamma+2)/k]`
    /// (RotatE relation phases uniform in `[-pi, pi]`).
    Random { seed: u64 },
    /// Entity rows copied from `anchors` (shape `|E| x k`); relations drawn
    /// as in `Random`.
    TextAnchored { anchors: &'a Matrix<T>, seed: u64 },
}

/// Build parameter tables for `entity_count` entities and `relation_count`
/// relations at entity dimension `dim`. Deterministic per seed: the entity
/// table is filled row-major first, then the relation table.
pub fn init_params<T: Scalar>(
    entity_count: usize,
    relation_count: usize,
    dim: usize,
    kind: ModelKind,
    gamma: f64,
    init: Init<'_, T>,
) -> Result<ModelParams<T>, KgeError> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(KgeError::BadGamma(gamma));
    }
    kind.check_dim(dim)?;
    let bound = (gamma + 2.0) / dim as f64;
    let rel_dim = kind.relation_dim(dim);

    let fill_relations = |rng: &mut ChaCha8Rng| -> Matrix<T> {
        Matrix::from_fn(relation_count, rel_dim, |_, _| {
            let v = match kind {
                ModelKind::RotatE => rng.random_range(-PI..=PI),
                _ => rng.random_range(-bound..=bound),
            };
            T::from_f64(v)
        })
    };

    let (entities, relations) = match init {
        Init::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let entities = Matrix::from_fn(entity_count, dim, |_, _| {
                T::from_f64(rng.random_range(-bound..=bound))
            });
            (entities, fill_relations(&mut rng))
        }
        Init::TextAnchored { anchors, seed } => {
            if anchors.rows() != entity_count || anchors.cols() != dim {
                return Err(KgeError::AnchorShape {
                    expected_rows: entity_count,
                    expected_cols: dim,
                    found_rows: anchors.rows(),
                    found_cols: anchors.cols(),
                });
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (anchors.clone(), fill_relations(&mut rng))
        }
    };

    let params = ModelParams {
        kind,
        gamma,
        entities,
        relations,
    };
    params.validate()?;
    Ok(params)
}

/// Dissimilarity of one triple; lower = more plausible. All arithmetic f64.
pub fn score<T: Scalar>(params: &ModelParams<T>, h: EntityId, r: RelationId, t: EntityId) -> f64 {
    let hv = params.entities.row(h.index());
    let rv = params.relations.row(r.index());
    let tv = params.entities.row(t.index());
    score_rows(params.kind, hv, rv, tv)
}

/// Score from raw rows; exposed so evaluation can score candidate vectors
/// without constructing triples.
pub fn score_rows<T: Scalar>(kind: ModelKind, hv: &[T], rv: &[T], tv: &[T]) -> f64 {
    match kind {
        ModelKind::TransE { p } => {
            let mut acc = 0.0f64;
            for j in 0..hv.len() {
                let d = hv[j].to_f64() + rv[j].to_f64() - tv[j].to_f64();
                acc += if p == 1 { d.abs() } else { d * d };
            }
            if p == 1 {
                acc
            } else {
                acc.sqrt()
            }
        }
        ModelKind::DistMult => {
            let mut acc = 0.0f64;
            for j in 0..hv.len() {
                acc += hv[j].to_f64() * rv[j].to_f64() * tv[j].to_f64();
            }
            -acc
        }
        ModelKind::RotatE => {
            let m = hv.len() / 2;
            let mut acc = 0.0f64;
            for j in 0..m {
                let (a, b) = (hv[j].to_f64(), hv[m + j].to_f64());
                let theta = rv[j].to_f64();
                let (s, c) = theta.sin_cos();
                let d_re = a * c - b * s - tv[j].to_f64();
                let d_im = a * s + b * c - tv[m + j].to_f64();
                acc += d_re * d_re + d_im * d_im;
            }
            acc.sqrt()
        }
    }
}

/// Gradients of [`score`] with respect to the three touched rows. `dr` has
/// the relation-row width (phases for RotatE).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreGradients {
    pub dh: Vec<f64>,
    pub dr: Vec<f64>,
    pub dt: Vec<f64>,
}

pub fn score_gradients<T: Scalar>(
    params: &ModelParams<T>,
    h: EntityId,
    r: RelationId,
    t: EntityId,
) -> ScoreGradients {
    let hv = params.entities.row(h.index());
    let rv = params.relations.row(r.index());
    let tv = params.entities.row(t.index());
    let k = hv.len();

    match params.kind {
        ModelKind::TransE { p: 1 } => {
            // Subgradient 0 at exact zeros of a coordinate.
            let mut dh = vec![0.0; k];
            let mut dt = vec![0.0; k];
            for j in 0..k {
                let d = hv[j].to_f64() + rv[j].to_f64() - tv[j].to_f64();
                let s = if d > 0.0 {
                    1.0
                } else if d < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                dh[j] = s;
                dt[j] = -s;
            }
            let dr = dh.clone();
            ScoreGradients { dh, dr, dt }
        }
        ModelKind::TransE { .. } => {
            let mut diff = vec![0.0; k];
            let mut norm = 0.0;
            for j in 0..k {
                let d = hv[j].to_f64() + rv[j].to_f64() - tv[j].to_f64();
                diff[j] = d;
                norm += d * d;
            }
            let norm = norm.sqrt();
            if norm == 0.0 {
                return ScoreGradients {
                    dh: vec![0.0; k],
                    dr: vec![0.0; k],
                    dt: vec![0.0; k],
                };
            }
            let dh: Vec<f64> = diff.iter().map(|d| d / norm).collect();
            let dt: Vec<f64> = dh.iter().map(|g| -g).collect();
            let dr = dh.clone();
            ScoreGradients { dh, dr, dt }
        }
        ModelKind::DistMult => {
            let mut dh = vec![0.0; k];
            let mut dr = vec![0.0; k];
            let mut dt = vec![0.0; k];
            for j in 0..k {
                let (a, b, c) = (hv[j].to_f64(), rv[j].to_f64(), tv[j].to_f64());
                dh[j] = -b * c;
                dr[j] = -a * c;
                dt[j] = -a * b;
            }
            ScoreGradients { dh, dr, dt }
        }
        ModelKind::RotatE => {
            let m = k / 2;
            let mut dh = vec![0.0; k];
            let mut dr = vec![0.0; m];
            let mut dt = vec![0.0; k];
            // First pass: rotated head and residual, to get the norm.
            let mut d_re = vec![0.0; m];
            let mut d_im = vec![0.0; m];
            let mut u_re = vec![0.0; m];
            let mut u_im = vec![0.0; m];
            let mut cs = vec![(0.0, 0.0); m];
            let mut norm = 0.0;
            for j in 0..m {
                let (a, b) = (hv[j].to_f64(), hv[m + j].to_f64());
                let (s, c) = rv[j].to_f64().sin_cos();
                cs[j] = (c, s);
                u_re[j] = a * c - b * s;
                u_im[j] = a * s + b * c;
                d_re[j] = u_re[j] - tv[j].to_f64();
                d_im[j] = u_im[j] - tv[m + j].to_f64();
                norm += d_re[j] * d_re[j] + d_im[j] * d_im[j];
            }
            let norm = norm.sqrt();
            if norm == 0.0 {
                return ScoreGradients { dh, dr, dt };
            }
            for j in 0..m {
                let (c, s) = cs[j];
                // Chain rule through u = h * e^{i theta}.
                dh[j] = (d_re[j] * c + d_im[j] * s) / norm;
                dh[m + j] = (-d_re[j] * s + d_im[j] * c) / norm;
                dr[j] = (-d_re[j] * u_im[j] + d_im[j] * u_re[j]) / norm;
                dt[j] = -d_re[j] / norm;
                dt[m + j] = -d_im[j] / norm;
            }
            ScoreGradients { dh, dr, dt }
        }
    }
}

/// Scores for a list of triples; elementwise identical to repeated [`score`]
/// calls.
pub fn batch_score<T: Scalar>(params: &ModelParams<T>, triples: &[Triple]) -> Vec<f64> {
    triples
        .iter()
        .map(|t| score(params, t.head, t.relation, t.tail))
        .collect()
}

/// Wrap a phase into `(-pi, pi]`.
pub fn wrap_phase(x: f64) -> f64 {
    let mut y = (x + PI).rem_euclid(2.0 * PI);
    if y == 0.0 {
        y = 2.0 * PI;
    }
    y - PI
}

/// Checkpoint metadata stored next to the two KGEV tables.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CheckpointMeta {
    pub kind: ModelKind,
    pub dim: usize,
    pub gamma: f64,
    pub step: u64,
    pub vocab_hash: String,
    pub config_hash: String,
}

pub const CHECKPOINT_ENTITY_FILE: &str = "entities.kgev";
pub const CHECKPOINT_RELATION_FILE: &str = "relations.kgev";
pub const CHECKPOINT_META_FILE: &str = "meta.json";

/// Write `entities.kgev`, `relations.kgev`, and `meta.json` into `dir`
/// (created if missing). Tables are stored as f32 regardless of `T`.
pub fn save_checkpoint<T: Scalar>(
    dir: &Path,
    params: &ModelParams<T>,
    step: u64,
    vocab_hash: &str,
    config_hash: &str,
) -> Result<(), KgeError> {
    std::fs::create_dir_all(dir)?;
    vecio::write_vectors(&dir.join(CHECKPOINT_ENTITY_FILE), &params.entities)?;
    vecio::write_vectors(&dir.join(CHECKPOINT_RELATION_FILE), &params.relations)?;
    let meta = CheckpointMeta {
        kind: params.kind,
        dim: params.entity_dim(),
        gamma: params.gamma,
        step,
        vocab_hash: vocab_hash.to_string(),
        config_hash: config_hash.to_string(),
    };
    let tmp = dir.join(format!("{CHECKPOINT_META_FILE}.tmp"));
    std::fs::write(&tmp, serde_json::to_string_pretty(&meta)?)?;
    std::fs::rename(&tmp, dir.join(CHECKPOINT_META_FILE))?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(dir: &Path) -> Result<(ModelParams<T>, CheckpointMeta), KgeError> {
    let meta: CheckpointMeta =
        serde_json::from_str(&std::fs::read_to_string(dir.join(CHECKPOINT_META_FILE))?)?;
    let entities: Matrix<T> = vecio::read_vectors(&dir.join(CHECKPOINT_ENTITY_FILE))?;
    let relations: Matrix<T> = vecio::read_vectors(&dir.join(CHECKPOINT_RELATION_FILE))?;
    if entities.cols() != meta.dim {
        return Err(KgeError::CheckpointShape {
            path: dir.display().to_string(),
            table: "entity",
            expected_rows: entities.rows(),
            expected_cols: meta.dim,
            found_rows: entities.rows(),
            found_cols: entities.cols(),
        });
    }
    let want_rel = meta.kind.relation_dim(meta.dim);
    if relations.cols() != want_rel {
        return Err(KgeError::CheckpointShape {
            path: dir.display().to_string(),
            table: "relation",
            expected_rows: relations.rows(),
            expected_cols: want_rel,
            found_rows: relations.rows(),
            found_cols: relations.cols(),
        });
    }
    let params = ModelParams {
        kind: meta.kind,
        gamma: meta.gamma,
        entities,
        relations,
    };
    params.validate()?;
    Ok((params, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    pub fn params_from_rows(
        kind: ModelKind,
        entity_rows: &[&[f64]],
        relation_rows: &[&[f64]],
    ) -> ModelParams<f64> {
        let dim = entity_rows[0].len();
        let rel_dim = relation_rows[0].len();
        let entities = Matrix::from_fn(entity_rows.len(), dim, |r, c| entity_rows[r][c]);
        let relations = Matrix::from_fn(relation_rows.len(), rel_dim, |r, c| relation_rows[r][c]);
        ModelParams {
            kind,
            gamma: 12.0,
            entities,
            relations,
        }
    }

    fn random_params(kind: ModelKind, dim: usize, seed: u64) -> ModelParams<f64> {
        init_params(4, 3, dim, kind, 12.0, Init::Random { seed }).unwrap()
    }

    const E0: EntityId = EntityId(0);
    const E1: EntityId = EntityId(1);
    const R0: RelationId = RelationId(0);

    #[test]
    fn transe_l1_exact_translation_scores_zero() {
        let p = params_from_rows(
            ModelKind::TransE { p: 1 },
            &[&[1.0, 0.0], &[1.0, 1.0]],
            &[&[0.0, 1.0]],
        );
        assert_eq!(score(&p, E0, R0, E1), 0.0);
    }

    #[test]
    fn transe_l2_three_four_five() {
        let p = params_from_rows(
            ModelKind::TransE { p: 2 },
            &[&[0.0, 0.0], &[3.0, 4.0]],
            &[&[0.0, 0.0]],
        );
        assert_eq!(score(&p, E0, R0, E1), 5.0);
    }

    #[test]
    fn distmult_product_sum() {
        let p = params_from_rows(
            ModelKind::DistMult,
            &[&[1.0, 1.0, 1.0], &[1.0, 1.0, 1.0]],
            &[&[1.0, 1.0, 1.0]],
        );
        assert_eq!(score(&p, E0, R0, E1), -3.0);
    }

    #[test]
    fn rotate_zero_phases_reduce_to_l2_distance() {
        // Identity rotation: score must equal ||h - t||_2 over all components.
        let h = [0.5, -0.25, 1.0, 2.0];
        let t = [0.1, 0.3, -0.7, 0.4];
        let p = params_from_rows(ModelKind::RotatE, &[&h, &t], &[&[0.0, 0.0]]);
        let expected = h
            .iter()
            .zip(&t)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!((score(&p, E0, R0, E1) - expected).abs() < 1e-15);
    }

    #[test]
    fn transe_l2_unit_vector_gradient() {
        let p = params_from_rows(
            ModelKind::TransE { p: 2 },
            &[&[0.0, 0.0], &[3.0, 4.0]],
            &[&[0.0, 0.0]],
        );
        let g = score_gradients(&p, E0, R0, E1);
        assert!((g.dt[0] - 3.0 / 5.0).abs() < 1e-15);
        assert!((g.dt[1] - 4.0 / 5.0).abs() < 1e-15);
        assert!((g.dh[0] - (-3.0 / 5.0)).abs() < 1e-15);
    }

    #[test]
    fn distmult_head_gradient_is_negated_hadamard() {
        let p = random_params(ModelKind::DistMult, 6, 3);
        let g = score_gradients(&p, E0, R0, E1);
        for j in 0..6 {
            let expect = -p.relations.row(0)[j] * p.entities.row(1)[j];
            assert!((g.dh[j] - expect).abs() < 1e-15);
        }
    }

    /// Central finite differences on the f64 path; the per-kind correctness
    /// oracle. Draws where a TransE L1 coordinate (or an L2/RotatE residual
    /// norm) sits within FD reach of the non-smooth point are skipped.
    fn check_fd(kind: ModelKind, dim: usize, draws: usize) {
        let eps = 1e-6;
        let mut rng = ChaCha8Rng::seed_from_u64(0xfd);
        let mut checked = 0usize;
        let mut attempts = 0usize;
        while checked < draws {
            attempts += 1;
            assert!(attempts < draws * 20, "too many degenerate draws");
            let seed: u64 = rng.random();
            let mut p = random_params(kind, dim, seed);
            // Spread entries into [-1, 1] so products are O(1).
            let scale = 1.0 / ((p.gamma + 2.0) / dim as f64);
            p.entities = Matrix::from_fn(p.entities.rows(), p.entities.cols(), |r, c| {
                p.entities.row(r)[c] * scale
            });
            let (h, r, t) = (E0, R0, E1);

            if let ModelKind::TransE { p: 1 } = kind {
                let hv = p.entities.row(0);
                let tv = p.entities.row(1);
                let rv = p.relations.row(0);
                let near_kink = (0..dim).any(|j| (hv[j] + rv[j] - tv[j]).abs() < 1e-3);
                if near_kink {
                    continue;
                }
            }
            if score(&p, h, r, t) < 1e-3 && !matches!(kind, ModelKind::DistMult) {
                continue;
            }

            let analytic = score_gradients(&p, h, r, t);
            let rel_dim = kind.relation_dim(dim);

            let check = |table: u8, row: usize, col: usize, expect: f64| {
                let mut plus = p.clone();
                let mut minus = p.clone();
                match table {
                    0 | 2 => {
                        plus.entities.row_mut(row)[col] += eps;
                        minus.entities.row_mut(row)[col] -= eps;
                    }
                    _ => {
                        plus.relations.row_mut(row)[col] += eps;
                        minus.relations.row_mut(row)[col] -= eps;
                    }
                }
                let fd = (score(&plus, h, r, t) - score(&minus, h, r, t)) / (2.0 * eps);
                let rel_err = (expect - fd).abs() / f64::max(1.0, expect.abs());
                assert!(
                    rel_err < 1e-5,
                    "{kind} FD mismatch table {table} col {col}: analytic {expect}, fd {fd}"
                );
            };

            for j in 0..dim {
                check(0, 0, j, analytic.dh[j]);
                check(2, 1, j, analytic.dt[j]);
            }
            for j in 0..rel_dim {
                check(1, 0, j, analytic.dr[j]);
            }
            checked += 1;
        }
    }

    #[test]
    fn gradients_match_finite_differences_transe_l1() {
        check_fd(ModelKind::TransE { p: 1 }, 6, 200);
    }

    #[test]
    fn gradients_match_finite_differences_transe_l2() {
        check_fd(ModelKind::TransE { p: 2 }, 6, 200);
    }

    #[test]
    fn gradients_match_finite_differences_distmult() {
        check_fd(ModelKind::DistMult, 6, 200);
    }

    #[test]
    fn gradients_match_finite_differences_rotate() {
        check_fd(ModelKind::RotatE, 6, 200);
    }

    #[test]
    fn transe_translation_invariance() {
        for kind in [ModelKind::TransE { p: 1 }, ModelKind::TransE { p: 2 }] {
            let p = random_params(kind, 8, 5);
            let base = score(&p, E0, R0, E1);
            let c = 0.37;
            let mut shifted = p.clone();
            for row in [0, 1] {
                for j in 0..8 {
                    shifted.entities.row_mut(row)[j] += c;
                }
            }
            assert!((score(&shifted, E0, R0, E1) - base).abs() < 1e-12);
        }
    }

    #[test]
    fn distmult_symmetry_exact() {
        let p = random_params(ModelKind::DistMult, 10, 9);
        let forward = score(&p, E0, R0, E1);
        let backward = score(&p, E1, R0, E0);
        assert_eq!(forward.to_bits(), backward.to_bits());
    }

    #[test]
    fn batch_score_matches_scalar_bitwise() {
        for kind in [
            ModelKind::TransE { p: 1 },
            ModelKind::TransE { p: 2 },
            ModelKind::DistMult,
            ModelKind::RotatE,
        ] {
            let p = random_params(kind, 8, 21);
            let mut rng = ChaCha8Rng::seed_from_u64(77);
            let triples: Vec<Triple> = (0..100)
                .map(|_| {
                    Triple::new(
                        rng.random_range(0..4),
                        rng.random_range(0..3),
                        rng.random_range(0..4),
                    )
                })
                .collect();
            let batch = batch_score(&p, &triples);
            assert_eq!(batch.len(), 100);
            for (i, t) in triples.iter().enumerate() {
                assert_eq!(
                    batch[i].to_bits(),
                    score(&p, t.head, t.relation, t.tail).to_bits()
                );
            }
        }
        let p = random_params(ModelKind::DistMult, 4, 0);
        assert!(batch_score(&p, &[]).is_empty());
    }

    #[test]
    fn random_init_is_deterministic_and_bounded() {
        let a: ModelParams<f32> =
            init_params(50, 7, 16, ModelKind::DistMult, 12.0, Init::Random { seed: 7 }).unwrap();
        let b: ModelParams<f32> =
            init_params(50, 7, 16, ModelKind::DistMult, 12.0, Init::Random { seed: 7 }).unwrap();
        assert_eq!(a.entities.data(), b.entities.data());
        assert_eq!(a.relations.data(), b.relations.data());
        let bound = (12.0 + 2.0) / 16.0;
        assert!(a.entities.data().iter().all(|v| v.abs() as f64 <= bound));
        assert!(a.relations.data().iter().all(|v| v.abs() as f64 <= bound));

        let c: ModelParams<f32> =
            init_params(50, 7, 16, ModelKind::DistMult, 12.0, Init::Random { seed: 8 }).unwrap();
        assert_ne!(a.entities.data(), c.entities.data());
    }

    #[test]
    fn rotate_init_relation_rows_are_phases() {
        let p: ModelParams<f32> =
            init_params(10, 4, 8, ModelKind::RotatE, 12.0, Init::Random { seed: 1 }).unwrap();
        assert_eq!(p.relations.cols(), 4);
        assert!(p
            .relations
            .data()
            .iter()
            .all(|v| (-PI..=PI).contains(&(*v as f64))));
    }

    #[test]
    fn rotate_rejects_odd_dim() {
        let err = init_params::<f32>(4, 2, 5, ModelKind::RotatE, 12.0, Init::Random { seed: 0 })
            .unwrap_err();
        assert!(matches!(err, KgeError::OddRotateDim(5)));
    }

    #[test]
    fn text_anchored_copies_rows_exactly() {
        let anchors = Matrix::<f32>::from_fn(6, 4, |r, c| (r * 10 + c) as f32 * 0.5);
        let p = init_params(
            6,
            2,
            4,
            ModelKind::TransE { p: 1 },
            12.0,
            Init::TextAnchored {
                anchors: &anchors,
                seed: 3,
            },
        )
        .unwrap();
        assert_eq!(p.entities.data(), anchors.data());

        let zeros = Matrix::<f32>::zeros(6, 4);
        let pz = init_params(
            6,
            2,
            4,
            ModelKind::TransE { p: 1 },
            12.0,
            Init::TextAnchored {
                anchors: &zeros,
                seed: 3,
            },
        )
        .unwrap();
        assert!(pz.entities.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn text_anchored_rejects_dim_mismatch() {
        let anchors = Matrix::<f32>::zeros(6, 5);
        let err = init_params(
            6,
            2,
            4,
            ModelKind::TransE { p: 1 },
            12.0,
            Init::TextAnchored {
                anchors: &anchors,
                seed: 3,
            },
        )
        .unwrap_err();
        assert!(matches!(
            err,
            KgeError::AnchorShape {
                expected_cols: 4,
                found_cols: 5,
                ..
            }
        ));
    }

    #[test]
    fn wrap_phase_lands_in_half_open_interval() {
        for x in [-10.0, -PI, -1.0, 0.0, 1.0, PI, 10.0, 100.0, -100.0] {
            let y = wrap_phase(x);
            assert!(y > -PI && y <= PI, "wrap({x}) = {y}");
            // Same angle modulo 2*pi.
            assert!(((x - y) / (2.0 * PI)).rem_euclid(1.0) < 1e-9
                || ((x - y) / (2.0 * PI)).rem_euclid(1.0) > 1.0 - 1e-9);
        }
        assert_eq!(wrap_phase(-PI), PI);
        assert_eq!(wrap_phase(0.0), 0.0);
    }

    #[test]
    fn checkpoint_round_trip() {
        let p: ModelParams<f32> =
            init_params(12, 5, 8, ModelKind::RotatE, 6.5, Init::Random { seed: 42 }).unwrap();
        let dir = tempdir().unwrap();
        save_checkpoint(dir.path(), &p, 123, "vhash", "chash").unwrap();
        let (q, meta) = load_checkpoint::<f32>(dir.path()).unwrap();
        assert_eq!(q.entities.data(), p.entities.data());
        assert_eq!(q.relations.data(), p.relations.data());
        assert_eq!(meta.kind, ModelKind::RotatE);
        assert_eq!(meta.dim, 8);
        assert_eq!(meta.gamma, 6.5);
        assert_eq!(meta.step, 123);
        assert_eq!(meta.vocab_hash, "vhash");
        assert_eq!(meta.config_hash, "chash");
    }

    #[test]
    fn checkpoint_rejects_shape_drift() {
        let p: ModelParams<f32> =
            init_params(4, 2, 6, ModelKind::DistMult, 12.0, Init::Random { seed: 1 }).unwrap();
        let dir = tempdir().unwrap();
        save_checkpoint(dir.path(), &p, 0, "v", "c").unwrap();
        // Overwrite the relation table with the wrong width.
        let bad = Matrix::<f32>::zeros(2, 5);
        vecio::write_vectors(&dir.path().join(CHECKPOINT_RELATION_FILE), &bad).unwrap();
        let err = load_checkpoint::<f32>(dir.path()).unwrap_err();
        assert!(matches!(err, KgeError::CheckpointShape { table: "relation", .. }));
    }

    #[test]
    fn model_kind_string_round_trip() {
        for kind in [
            ModelKind::TransE { p: 1 },
            ModelKind::TransE { p: 2 },
            ModelKind::DistMult,
            ModelKind::RotatE,
        ] {
            let s = kind.to_string();
            assert_eq!(s.parse::<ModelKind>().unwrap(), kind);
        }
        assert!("convkb".parse::<ModelKind>().is_err());
    }
}
