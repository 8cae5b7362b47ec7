//! The two loss terms: logistic-margin link loss over scored triples and the
//! semantic anchoring distance, with gradients.
//!
//! Per positive triple with negatives N, the link loss is
//! `-log sigmoid(gamma - f_pos) - (1/|N|) * sum -log... ` — concretely
//! `softplus(f_pos - gamma) + (1/|N|) * sum softplus(gamma - f_neg)`,
//! using the identity `-log sigmoid(x) = softplus(-x)`. Minimizing drives
//! positive scores below the margin and negative scores above it. Batch
//! values are means over positives, so the loss weights are independent of
//! batch size.

use crate::kg::EntityId;
use crate::matrix::{Matrix, Scalar};
use crate::train::AnchorDistance;

/// Numerically stable `ln(1 + e^z)`.
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Logistic function, stable at both tails.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Link loss of one positive given its negative scores.
pub fn link_loss_from_scores(f_pos: f64, f_neg: &[f64], gamma: f64) -> f64 {
    assert!(!f_neg.is_empty(), "need at least one negative score");
    let positive_term = softplus(f_pos - gamma);
    let negative_term: f64 = f_neg.iter().map(|&f| softplus(gamma - f)).sum();
    positive_term + negative_term / f_neg.len() as f64
}

/// d(link loss)/d(f_pos) for one positive.
pub fn link_loss_dpos(f_pos: f64, gamma: f64) -> f64 {
    sigmoid(f_pos - gamma)
}

/// d(link loss)/d(f_neg) for one negative among `n_neg`.
pub fn link_loss_dneg(f_neg: f64, gamma: f64, n_neg: usize) -> f64 {
    -sigmoid(gamma - f_neg) / n_neg as f64
}

/// Value + gradient of the anchor distance for the batch's entities.
/// `batch_entities` must be deduplicated; gradients come back per entity in
/// the same order. The loss is the mean over *included* entities (Cosine
/// excludes zero-norm pairs with a warning).
pub fn anchor_loss_and_grads<T: Scalar>(
    entities: &Matrix<T>,
    anchors: &Matrix<T>,
    batch_entities: &[EntityId],
    distance: AnchorDistance,
) -> (f64, Vec<Vec<f64>>) {
    let dim = entities.cols();
    let mut grads: Vec<Vec<f64>> = vec![vec![0.0; dim]; batch_entities.len()];
    if batch_entities.is_empty() {
        return (0.0, grads);
    }

    match distance {
        AnchorDistance::SquaredL2 => {
            let count = batch_entities.len() as f64;
            let mut total = 0.0;
            for (slot, &e) in batch_entities.iter().enumerate() {
                let ev = entities.row(e.index());
                let av = anchors.row(e.index());
                for j in 0..dim {
                    let d = ev[j].to_f64() - av[j].to_f64();
                    total += d * d;
                    grads[slot][j] = 2.0 * d / count;
                }
            }
            (total / count, grads)
        }
        AnchorDistance::Cosine => {
            // First pass decides which entities are included.
            let mut included: Vec<usize> = Vec::with_capacity(batch_entities.len());
            for (slot, &e) in batch_entities.iter().enumerate() {
                let ev = entities.row(e.index());
                let av = anchors.row(e.index());
                let en: f64 = ev.iter().map(|v| v.to_f64() * v.to_f64()).sum::<f64>().sqrt();
                let an: f64 = av.iter().map(|v| v.to_f64() * v.to_f64()).sum::<f64>().sqrt();
                if en == 0.0 || an == 0.0 {
                    log::warn!(
                        "cosine anchor distance: entity {} has a zero-norm side, excluded from the mean",
                        e.0
                    );
                } else {
                    included.push(slot);
                }
            }
            if included.is_empty() {
                return (0.0, grads);
            }
            let count = included.len() as f64;
            let mut total = 0.0;
            for &slot in &included {
                let e = batch_entities[slot];
                let ev = entities.row(e.index());
                let av = anchors.row(e.index());
                let mut dot = 0.0;
                let mut en2 = 0.0;
                let mut an2 = 0.0;
                for j in 0..dim {
                    let (x, y) = (ev[j].to_f64(), av[j].to_f64());
                    dot += x * y;
                    en2 += x * x;
                    an2 += y * y;
                }
                let en = en2.sqrt();
                let an = an2.sqrt();
                let cos = dot / (en * an);
                total += 1.0 - cos;
                // d(1 - cos)/de_j = cos * e_j / |e|^2 - a_j / (|e| |a|)
                for j in 0..dim {
                    let (x, y) = (ev[j].to_f64(), av[j].to_f64());
                    grads[slot][j] = (cos * x / en2 - y / (en * an)) / count;
                }
            }
            (total / count, grads)
        }
        AnchorDistance::Kl => {
            let count = batch_entities.len() as f64;
            let mut total = 0.0;
            for (slot, &e) in batch_entities.iter().enumerate() {
                let ev = entities.row(e.index());
                let av = anchors.row(e.index());
                let q = softmax(ev);
                let p = softmax(av);
                // KL(p || q), gradient w.r.t. the entity logits is q - p.
                let mut kl = 0.0;
                for j in 0..dim {
                    if p[j] > 0.0 {
                        kl += p[j] * (p[j].ln() - q[j].ln());
                    }
                    grads[slot][j] = (q[j] - p[j]) / count;
                }
                total += kl;
            }
            (total / count, grads)
        }
    }
}

fn softmax<T: Scalar>(row: &[T]) -> Vec<f64> {
    let max = row
        .iter()
        .map(|v| v.to_f64())
        .fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|v| (v.to_f64() - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// The two loss components of one step and their weighted total.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub link_loss: f64,
    pub anchor_loss: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn compose(zeta1: f64, anchor_loss: f64, zeta2: f64, link_loss: f64) -> Self {
        LossBreakdown {
            link_loss,
            anchor_loss,
            total: zeta1 * anchor_loss + zeta2 * link_loss,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn scores_at_the_margin_give_two_ln_two() {
        let gamma = 7.5;
        let loss = link_loss_from_scores(gamma, &[gamma], gamma);
        assert!((loss - 2.0 * std::f64::consts::LN_2).abs() < 1e-15, "{loss}");
    }

    #[test]
    fn saturated_instance_vanishes() {
        // Positive far below the margin, negative far above it.
        let loss = link_loss_from_scores(0.0, &[1e4], 50.0);
        assert!(loss.abs() < 1e-12, "{loss}");
        assert!(loss >= 0.0);
    }

    #[test]
    fn loss_terms_are_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let gamma = rng.random_range(0.1..20.0);
            let f_pos = rng.random_range(-30.0..30.0);
            let f_neg: Vec<f64> = (0..rng.random_range(1..6))
                .map(|_| rng.random_range(-30.0..30.0))
                .collect();
            assert!(link_loss_from_scores(f_pos, &f_neg, gamma) >= 0.0);
        }
    }

    /// Independent transcription: the composition of per-triple logistic
    /// terms written with the raw `-ln(sigmoid(x))` formula evaluated
    /// literally.
    fn transcription_oracle(f_pos: f64, f_neg: &[f64], gamma: f64) -> f64 {
        let raw_log_sigmoid = |x: f64| -> f64 { -(1.0 / (1.0 + (-x).exp())).ln() };
        let pos = raw_log_sigmoid(gamma - f_pos);
        let neg: f64 = f_neg.iter().map(|&f| raw_log_sigmoid(f - gamma)).sum::<f64>()
            / f_neg.len() as f64;
        pos + neg
    }

    #[test]
    fn matches_term_by_term_transcription() {
        // Scores drawn within gamma +/- 8: inside that band the literal
        // -ln(sigmoid(x)) transcription is itself accurate to ~1e-13
        // relative (beyond it the naive form loses the low bits of terms
        // like ln(1 - 3e-8) and stops being a usable oracle; the softplus
        // form stays exact and is covered by the saturation tests).
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..1000 {
            let gamma = rng.random_range(0.5..15.0);
            let f_pos = gamma + rng.random_range(-8.0..8.0);
            let f_neg: Vec<f64> = (0..rng.random_range(1..8))
                .map(|_| gamma + rng.random_range(-8.0..8.0))
                .collect();
            let ours = link_loss_from_scores(f_pos, &f_neg, gamma);
            let oracle = transcription_oracle(f_pos, &f_neg, gamma);
            let rel = (ours - oracle).abs() / oracle.abs().max(1e-300);
            assert!(rel < 1e-10, "ours {ours} oracle {oracle}");
        }
    }

    #[test]
    fn score_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let eps = 1e-6;
        for _ in 0..100 {
            let gamma = rng.random_range(0.5..15.0);
            let f_pos: f64 = rng.random_range(-20.0..20.0);
            let f_neg: Vec<f64> = (0..4).map(|_| rng.random_range(-20.0..20.0)).collect();

            let d_analytic = link_loss_dpos(f_pos, gamma);
            let d_fd = (link_loss_from_scores(f_pos + eps, &f_neg, gamma)
                - link_loss_from_scores(f_pos - eps, &f_neg, gamma))
                / (2.0 * eps);
            assert!((d_analytic - d_fd).abs() < 1e-7, "{d_analytic} vs {d_fd}");

            let mut bumped = f_neg.clone();
            bumped[2] += eps;
            let mut dipped = f_neg.clone();
            dipped[2] -= eps;
            let d_analytic = link_loss_dneg(f_neg[2], gamma, 4);
            let d_fd = (link_loss_from_scores(f_pos, &bumped, gamma)
                - link_loss_from_scores(f_pos, &dipped, gamma))
                / (2.0 * eps);
            assert!((d_analytic - d_fd).abs() < 1e-7, "{d_analytic} vs {d_fd}");
        }
    }

    fn matrix_from(rows: &[&[f64]]) -> Matrix<f64> {
        Matrix::from_fn(rows.len(), rows[0].len(), |r, c| rows[r][c])
    }

    #[test]
    fn anchor_identity_is_zero_for_squared_l2_and_kl() {
        let e = matrix_from(&[&[0.3, -1.2, 0.5], &[2.0, 0.0, 1.0]]);
        let ids = [EntityId(0), EntityId(1)];
        for distance in [AnchorDistance::SquaredL2, AnchorDistance::Kl] {
            let (loss, grads) = anchor_loss_and_grads(&e, &e, &ids, distance);
            assert!(loss.abs() < 1e-15, "{distance:?}: {loss}");
            for g in &grads {
                assert!(g.iter().all(|v| v.abs() < 1e-15));
            }
        }
        // Cosine: colinear (identical) vectors also give 0.
        let (loss, _) = anchor_loss_and_grads(&e, &e, &ids, AnchorDistance::Cosine);
        assert!(loss.abs() < 1e-12);
    }

    #[test]
    fn squared_l2_three_four_five() {
        let e = matrix_from(&[&[0.0, 0.0]]);
        let a = matrix_from(&[&[3.0, 4.0]]);
        let (loss, grads) =
            anchor_loss_and_grads(&e, &a, &[EntityId(0)], AnchorDistance::SquaredL2);
        assert_eq!(loss, 25.0);
        assert_eq!(grads[0], vec![-6.0, -8.0]);
    }

    #[test]
    fn squared_l2_mean_over_batch_entities() {
        let e = matrix_from(&[&[0.0], &[0.0], &[0.0]]);
        let a = matrix_from(&[&[1.0], &[2.0], &[3.0]]);
        let ids = [EntityId(0), EntityId(1), EntityId(2)];
        let (loss, _) = anchor_loss_and_grads(&e, &a, &ids, AnchorDistance::SquaredL2);
        assert!((loss - (1.0 + 4.0 + 9.0) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn cosine_excludes_zero_norm_rows() {
        let e = matrix_from(&[&[0.0, 0.0], &[1.0, 0.0]]);
        let a = matrix_from(&[&[1.0, 1.0], &[0.0, 1.0]]);
        let ids = [EntityId(0), EntityId(1)];
        let (loss, grads) = anchor_loss_and_grads(&e, &a, &ids, AnchorDistance::Cosine);
        // Entity 0 excluded (zero norm); entity 1 orthogonal to anchor: 1 - 0.
        assert!((loss - 1.0).abs() < 1e-15);
        assert!(grads[0].iter().all(|v| *v == 0.0));
    }

    fn kl_oracle(e: &[f64], a: &[f64]) -> f64 {
        // Brute-force softmax + KL without the shared-max trick.
        let se: f64 = e.iter().map(|x| x.exp()).sum();
        let sa: f64 = a.iter().map(|x| x.exp()).sum();
        e.iter()
            .zip(a)
            .map(|(x, y)| {
                let q = x.exp() / se;
                let p = y.exp() / sa;
                p * (p / q).ln()
            })
            .sum()
    }

    #[test]
    fn kl_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let ev: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
            let av: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
            let e = matrix_from(&[&ev]);
            let a = matrix_from(&[&av]);
            let (loss, _) = anchor_loss_and_grads(&e, &a, &[EntityId(0)], AnchorDistance::Kl);
            let oracle = kl_oracle(&ev, &av);
            assert!((loss - oracle).abs() < 1e-12, "{loss} vs {oracle}");
            assert!(loss >= -1e-15, "KL must be non-negative");
        }
    }

    #[test]
    fn anchor_gradients_match_finite_differences() {
        let eps = 1e-6;
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for distance in [
            AnchorDistance::SquaredL2,
            AnchorDistance::Cosine,
            AnchorDistance::Kl,
        ] {
            for _ in 0..50 {
                let dim = 4;
                let ev: Vec<f64> = (0..dim).map(|_| rng.random_range(0.2..2.0)).collect();
                let av: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
                let a = matrix_from(&[&av]);
                let ids = [EntityId(0)];

                let e = matrix_from(&[&ev]);
                let (_, grads) = anchor_loss_and_grads(&e, &a, &ids, distance);
                for j in 0..dim {
                    let mut up = ev.clone();
                    up[j] += eps;
                    let mut down = ev.clone();
                    down[j] -= eps;
                    let (lu, _) =
                        anchor_loss_and_grads(&matrix_from(&[&up]), &a, &ids, distance);
                    let (ld, _) =
                        anchor_loss_and_grads(&matrix_from(&[&down]), &a, &ids, distance);
                    let fd = (lu - ld) / (2.0 * eps);
                    let rel = (grads[0][j] - fd).abs() / grads[0][j].abs().max(1.0);
                    assert!(
                        rel < 1e-5,
                        "{distance:?} component {j}: analytic {} fd {fd}",
                        grads[0][j]
                    );
                }
            }
        }
    }

    #[test]
    fn breakdown_composes_exactly() {
        let b = LossBreakdown::compose(0.3, 2.5, 1.7, 4.25);
        assert_eq!(b.total, 0.3 * 2.5 + 1.7 * 4.25);
        assert_eq!(b.anchor_loss, 2.5);
        assert_eq!(b.link_loss, 4.25);
    }
}
