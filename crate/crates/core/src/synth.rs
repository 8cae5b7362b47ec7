//! Seeded synthetic knowledge graphs for tests and benchmarks: a uniform
//! random graph (sampling checks), a planted-solution graph that every score
//! family can memorize exactly (memorization checks), and a clustered
//! compound/disease graph whose anchors carry cluster identity
//! (semantic-advantage checks).

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::kg::{EntityId, RelationId, Split, Triple, TripleSet, Vocabulary};
use crate::matrix::Matrix;

/// Uniform random KG: `n_triples` distinct triples (no self-loops) over
/// `Node::e{i}` entities and `r{j}` relations.
pub fn random_kg(n_entities: u32, n_relations: u32, n_triples: usize, seed: u64) -> TripleSet {
    assert!(n_entities >= 2, "need at least two entities");
    assert!(
        (n_triples as u128) <= n_entities as u128 * (n_entities as u128 - 1) * n_relations as u128,
        "more triples requested than distinct non-loop triples exist"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: BTreeSet<Triple> = BTreeSet::new();
    while chosen.len() < n_triples {
        let head = rng.random_range(0..n_entities);
        let mut tail = rng.random_range(0..n_entities);
        while tail == head {
            tail = rng.random_range(0..n_entities);
        }
        chosen.insert(Triple::new(head, rng.random_range(0..n_relations), tail));
    }
    let entities = Arc::new(Vocabulary::from_labels(
        (0..n_entities).map(|i| format!("Node::e{i}")),
    ));
    let relations = Arc::new(Vocabulary::from_labels(
        (0..n_relations).map(|j| format!("r{j}")),
    ));
    TripleSet::new(chosen.into_iter().collect(), Split::Train, entities, relations)
        .expect("synthetic triples are valid by construction")
}

/// Planted-solution KG: entities form couples sitting at integer positions on
/// a latent line, and each relation is a fixed shift along that line. Heads
/// are drawn from alternating blocks of `shift` consecutive positions, so no
/// entity is both head and tail of the same relation, and every head links to
/// both members of the couple `shift` positions up. Couple mates therefore
/// share their entire constraint set and may co-locate, which means an
/// embedding realizing every triple exactly exists by construction — the
/// graph is memorizable by translation, bilinear, and rotation scorers alike.
/// The seed only shuffles which entity occupies which (position, member) slot.
pub fn planted_kg(couples: usize, shifts: &[usize], seed: u64) -> TripleSet {
    assert!(couples >= 2, "need at least two couples");
    assert!(!shifts.is_empty(), "need at least one relation shift");
    for &k in shifts {
        assert!(
            k >= 1 && 2 * k <= couples,
            "shift {k} must fit two alternating blocks into {couples} positions"
        );
    }
    let n_entities = 2 * couples as u32;
    let mut slot_entity: Vec<u32> = (0..n_entities).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rand::seq::SliceRandom::shuffle(&mut slot_entity[..], &mut rng);
    let members = |p: usize| [slot_entity[2 * p], slot_entity[2 * p + 1]];

    let mut triples = Vec::new();
    for (r, &k) in shifts.iter().enumerate() {
        let mut block = 0;
        while block + 2 * k <= couples {
            for h in block..block + k {
                for eh in members(h) {
                    for et in members(h + k) {
                        triples.push(Triple::new(eh, r as u32, et));
                    }
                }
            }
            block += 2 * k;
        }
    }
    let entities = Arc::new(Vocabulary::from_labels(
        (0..n_entities).map(|i| format!("Node::e{i}")),
    ));
    let relations = Arc::new(Vocabulary::from_labels(
        (0..shifts.len()).map(|j| format!("r{j}")),
    ));
    TripleSet::new(triples, Split::Train, entities, relations)
        .expect("planted triples are valid by construction")
}

/// Seeded train/test split that keeps every test-side entity and relation
/// visible during training: after a random cut, test triples mentioning a
/// train-unseen id are promoted to train. Sizes may therefore differ a
/// little from the requested fraction.
pub fn covered_split(all: &TripleSet, test_fraction: f64, seed: u64) -> (TripleSet, TripleSet) {
    let (train, _, test) = all
        .split_fractions(0.0, test_fraction, seed)
        .expect("fractions are validated by split_fractions");
    let mut train_triples = train.triples().to_vec();
    let mut seen_entity = vec![false; all.entity_count()];
    let mut seen_relation = vec![false; all.relation_count()];
    for t in &train_triples {
        seen_entity[t.head.index()] = true;
        seen_entity[t.tail.index()] = true;
        seen_relation[t.relation.index()] = true;
    }
    let mut test_triples = Vec::with_capacity(test.len());
    for t in test.triples() {
        if seen_entity[t.head.index()]
            && seen_entity[t.tail.index()]
            && seen_relation[t.relation.index()]
        {
            test_triples.push(*t);
        } else {
            seen_entity[t.head.index()] = true;
            seen_entity[t.tail.index()] = true;
            seen_relation[t.relation.index()] = true;
            train_triples.push(*t);
        }
    }
    (
        all.with_triples(train_triples, Split::Train)
            .expect("promotion keeps triples valid and distinct"),
        all.with_triples(test_triples, Split::Test)
            .expect("promotion keeps triples valid and distinct"),
    )
}

#[derive(Debug, Clone)]
pub struct ClusteredConfig {
    pub clusters: usize,
    pub compounds_per_cluster: usize,
    pub diseases_per_cluster: usize,
    /// Distinct same-cluster diseases each compound treats.
    pub edges_per_compound: usize,
    pub anchor_dim: usize,
    /// Uniform noise amplitude added to every anchor coordinate.
    pub anchor_noise: f64,
    /// Fraction of treatment edges held out as the test split.
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for ClusteredConfig {
    fn default() -> Self {
        ClusteredConfig {
            clusters: 10,
            compounds_per_cluster: 25,
            diseases_per_cluster: 25,
            edges_per_compound: 4,
            anchor_dim: 32,
            anchor_noise: 0.1,
            test_fraction: 0.2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ClusteredKg {
    pub train: TripleSet,
    pub test: TripleSet,
    /// One row per entity: the cluster's block code plus noise.
    pub anchors: Matrix<f32>,
    pub compounds: Vec<EntityId>,
    pub diseases: Vec<EntityId>,
    pub treats: RelationId,
    pub cluster_of: Vec<usize>,
}

/// Clustered compound/disease graph. Entities are grouped into clusters,
/// every `treats` edge stays inside its cluster, and each entity's anchor
/// vector activates its cluster's coordinate block — so text anchors reveal
/// which candidates are plausible even for held-out edges.
pub fn clustered_kg(config: &ClusteredConfig) -> ClusteredKg {
    assert!(config.clusters >= 1);
    assert!(
        config.anchor_dim >= config.clusters,
        "anchor_dim must provide at least one coordinate per cluster"
    );
    assert!(
        config.edges_per_compound <= config.diseases_per_cluster,
        "a compound cannot treat more distinct diseases than its cluster has"
    );
    assert!((0.0..1.0).contains(&config.test_fraction));
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let per_cluster = config.compounds_per_cluster + config.diseases_per_cluster;
    let mut labels = Vec::with_capacity(config.clusters * per_cluster);
    let mut compounds = Vec::new();
    let mut diseases = Vec::new();
    let mut cluster_of = Vec::with_capacity(config.clusters * per_cluster);
    for c in 0..config.clusters {
        for i in 0..config.compounds_per_cluster {
            compounds.push(EntityId(labels.len() as u32));
            cluster_of.push(c);
            labels.push(format!("Compound::C{c}_{i}"));
        }
        for i in 0..config.diseases_per_cluster {
            diseases.push(EntityId(labels.len() as u32));
            cluster_of.push(c);
            labels.push(format!("Disease::D{c}_{i}"));
        }
    }
    let entities = Arc::new(Vocabulary::from_labels(labels));
    let relations = Arc::new(Vocabulary::from_labels(["treats"]));
    let treats = RelationId(0);

    let mut edges = Vec::new();
    for c in 0..config.clusters {
        let disease_base = (c * per_cluster + config.compounds_per_cluster) as u32;
        for i in 0..config.compounds_per_cluster {
            let compound = (c * per_cluster + i) as u32;
            let picks = rand::seq::index::sample(
                &mut rng,
                config.diseases_per_cluster,
                config.edges_per_compound,
            );
            for d in picks {
                edges.push(Triple::new(compound, 0, disease_base + d as u32));
            }
        }
    }
    let all = TripleSet::new(edges, Split::Train, entities, relations)
        .expect("clustered edges are valid by construction");
    let (train, test) = covered_split(&all, config.test_fraction, rng.random());

    let block = config.anchor_dim / config.clusters;
    let anchors = Matrix::from_fn(cluster_of.len(), config.anchor_dim, |e, j| {
        let code = if j / block == cluster_of[e] && j / block < config.clusters {
            1.0
        } else {
            0.0
        };
        (code + rng.random_range(-config.anchor_noise..=config.anchor_noise)) as f32
    });

    ClusteredKg {
        train,
        test,
        anchors,
        compounds,
        diseases,
        treats,
        cluster_of,
    }
}
