//! Uniform negative sampling by slot corruption.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::kg::{EntityId, Triple, TripleSet};

use super::config::CorruptionSide;

/// Corrupted counterparts of one positive batch: `negatives[i]` holds the
/// `neg_per_pos` corruptions of `positives[i]`.
#[derive(Debug, Clone)]
pub struct NegativeBatch {
    pub negatives: Vec<Vec<Triple>>,
}

/// Bound on resampling attempts per corruption when a filter rejects draws.
const FILTER_REJECTION_CAP: usize = 1000;

/// Draw `neg_per_pos` corruptions per positive, uniform over the entity
/// vocabulary. The corrupted slot always changes (resampled on collision
/// with the original entity) except in the degenerate one-entity vocabulary,
/// which is warned about and passed through. With `side == Both`, even batch
/// positions corrupt the tail and odd positions the head. `filter` drops
/// corruptions that are members of the given set (typically the training
/// split).
pub fn sample_negatives(
    positives: &[Triple],
    entity_count: usize,
    neg_per_pos: usize,
    side: CorruptionSide,
    filter: Option<&TripleSet>,
    rng: &mut ChaCha8Rng,
) -> NegativeBatch {
    assert!(neg_per_pos >= 1, "neg_per_pos must be >= 1");
    assert!(entity_count >= 1, "empty entity vocabulary");
    if entity_count == 1 {
        log::warn!("negative sampling over a single-entity vocabulary is degenerate: corruptions equal their positives");
    }
    let mut negatives = Vec::with_capacity(positives.len());
    for (i, positive) in positives.iter().enumerate() {
        let corrupt_tail = match side {
            CorruptionSide::Tail => true,
            CorruptionSide::Head => false,
            CorruptionSide::Both => i % 2 == 0,
        };
        let original = if corrupt_tail {
            positive.tail
        } else {
            positive.head
        };
        let mut row = Vec::with_capacity(neg_per_pos);
        for _ in 0..neg_per_pos {
            let mut attempts = 0usize;
            let corrupted = loop {
                attempts += 1;
                let candidate = EntityId(rng.random_range(0..entity_count as u32));
                if candidate == original && entity_count > 1 {
                    continue;
                }
                let triple = if corrupt_tail {
                    Triple {
                        tail: candidate,
                        ..*positive
                    }
                } else {
                    Triple {
                        head: candidate,
                        ..*positive
                    }
                };
                match filter {
                    Some(set) if set.contains(&triple) && attempts < FILTER_REJECTION_CAP => {
                        continue;
                    }
                    _ => break triple,
                }
            };
            row.push(corrupted);
        }
        negatives.push(row);
    }
    NegativeBatch { negatives }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use std::collections::HashMap;

    fn positives(n: usize) -> Vec<Triple> {
        (0..n as u32).map(|i| Triple::new(i % 3, 0, (i + 1) % 3)).collect()
    }

    #[test]
    fn fixed_seed_reproduces_batches() {
        let pos = positives(16);
        let mut a = ChaCha8Rng::seed_from_u64(5);
        let mut b = ChaCha8Rng::seed_from_u64(5);
        let na = sample_negatives(&pos, 50, 4, CorruptionSide::Both, None, &mut a);
        let nb = sample_negatives(&pos, 50, 4, CorruptionSide::Both, None, &mut b);
        assert_eq!(na.negatives, nb.negatives);
        let mut c = ChaCha8Rng::seed_from_u64(6);
        let nc = sample_negatives(&pos, 50, 4, CorruptionSide::Both, None, &mut c);
        assert_ne!(na.negatives, nc.negatives);
    }

    #[test]
    fn corruption_changes_exactly_the_requested_slot() {
        let pos = positives(10);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let batch = sample_negatives(&pos, 50, 5, CorruptionSide::Tail, None, &mut rng);
        for (p, row) in pos.iter().zip(&batch.negatives) {
            assert_eq!(row.len(), 5);
            for n in row {
                assert_eq!(n.head, p.head);
                assert_eq!(n.relation, p.relation);
                assert_ne!(n.tail, p.tail);
            }
        }
        let batch = sample_negatives(&pos, 50, 5, CorruptionSide::Head, None, &mut rng);
        for (p, row) in pos.iter().zip(&batch.negatives) {
            for n in row {
                assert_ne!(n.head, p.head);
                assert_eq!(n.tail, p.tail);
            }
        }
    }

    #[test]
    fn both_alternates_by_batch_position() {
        let pos = positives(8);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let batch = sample_negatives(&pos, 50, 3, CorruptionSide::Both, None, &mut rng);
        for (i, (p, row)) in pos.iter().zip(&batch.negatives).enumerate() {
            for n in row {
                if i % 2 == 0 {
                    assert_eq!(n.head, p.head, "even positions corrupt the tail");
                    assert_ne!(n.tail, p.tail);
                } else {
                    assert_eq!(n.tail, p.tail, "odd positions corrupt the head");
                    assert_ne!(n.head, p.head);
                }
            }
        }
    }

    #[test]
    fn single_entity_vocabulary_degenerates_to_the_original() {
        let pos = vec![Triple::new(0, 0, 0)];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let batch = sample_negatives(&pos, 1, 4, CorruptionSide::Tail, None, &mut rng);
        for n in &batch.negatives[0] {
            assert_eq!(*n, pos[0]);
        }
    }

    #[test]
    fn frequencies_uniform_within_five_sigma() {
        // 1e5 tail corruptions of a fixed positive over |E|=10; the original
        // tail (entity 0) is excluded, so expect uniform over the other 9.
        let pos = vec![Triple::new(1, 0, 0)];
        let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE);
        let draws = 100_000usize;
        let mut counts: HashMap<u32, usize> = HashMap::new();
        let batch = sample_negatives(&pos, 10, draws, CorruptionSide::Tail, None, &mut rng);
        for n in &batch.negatives[0] {
            *counts.entry(n.tail.0).or_default() += 1;
        }
        assert_eq!(counts.get(&0), None, "original tail must never appear");
        let p = 1.0 / 9.0;
        let expected = draws as f64 * p;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for entity in 1..10u32 {
            let observed = *counts.get(&entity).unwrap_or(&0) as f64;
            assert!(
                (observed - expected).abs() < 5.0 * sigma,
                "entity {entity}: observed {observed}, expected {expected} +- {}",
                5.0 * sigma
            );
        }
    }

    #[test]
    fn filter_excludes_training_members() {
        use crate::kg::{Split, Vocabulary};
        use std::sync::Arc;
        // Dense little graph: relation 0 connects 0->1, 0->2, 0->3 out of 5
        // entities; tail corruption of (0, 0, 1) with the train filter can
        // only produce tail 4 (0 is excluded as head? no — only members and
        // the original tail are excluded, so tails 2 and 3 are out, 0 and 4
        // remain).
        let entities = Arc::new(Vocabulary::from_labels(["E::0", "E::1", "E::2", "E::3", "E::4"]));
        let relations = Arc::new(Vocabulary::from_labels(["r"]));
        let train = TripleSet::new(
            vec![Triple::new(0, 0, 1), Triple::new(0, 0, 2), Triple::new(0, 0, 3)],
            Split::Train,
            entities,
            relations,
        )
        .unwrap();
        let pos = vec![Triple::new(0, 0, 1)];
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let batch = sample_negatives(&pos, 5, 200, CorruptionSide::Tail, Some(&train), &mut rng);
        for n in &batch.negatives[0] {
            assert!(!train.contains(n), "filtered sampling emitted a training triple: {n:?}");
            assert_ne!(n.tail.0, 1);
        }
        let seen: std::collections::HashSet<u32> =
            batch.negatives[0].iter().map(|n| n.tail.0).collect();
        assert_eq!(seen, [0u32, 4u32].into_iter().collect());
    }
}
