//! Triple store: loading, validation, indexing, and splitting of
//! (head, relation, tail) knowledge-graph triples.
//!
//! Triple files are UTF-8 TSV, one `head<TAB>relation<TAB>tail` per line, no
//! header. Vocabularies assign dense indices in first-appearance order and can
//! be dumped/reloaded as `index<TAB>label` TSV. Entity labels follow the
//! `Type::Source:ID` convention; the substring before the first `::` is the
//! entity type and drives the type pools used for candidate sampling.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KgError {
    #[error("{path}:{line}: expected 3 tab-separated fields, found {found}")]
    MalformedLine {
        path: String,
        line: usize,
        found: usize,
    },
    #[error("unknown entity label `{0}`")]
    UnknownEntity(String),
    #[error("unknown relation label `{0}`")]
    UnknownRelation(String),
    #[error("entity `{0}` has no `::` type prefix")]
    MissingTypePrefix(String),
    #[error("entity index {index} out of range (vocabulary has {len} entries)")]
    EntityIndexOutOfRange { index: u32, len: usize },
    #[error("relation index {index} out of range (vocabulary has {len} entries)")]
    RelationIndexOutOfRange { index: u32, len: usize },
    #[error("duplicate triple within one split: ({0}, {1}, {2})")]
    DuplicateTriple(String, String, String),
    #[error("vocabulary file {path}:{line}: {message}")]
    BadVocabFile {
        path: String,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Dense entity index into the entity vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntityId(pub u32);

/// Dense relation index into the relation vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelationId(pub u32);

impl EntityId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RelationId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// One observed fact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(head: u32, relation: u32, tail: u32) -> Self {
        Triple {
            head: EntityId(head),
            relation: RelationId(relation),
            tail: EntityId(tail),
        }
    }
}

/// Bidirectional label <-> dense index map. Indices are assigned in
/// first-appearance order and never reused.
#[derive(Debug, Default, Clone)]
pub struct Vocabulary {
    labels: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_labels<I: IntoIterator<Item = S>, S: Into<String>>(labels: I) -> Self {
        let mut v = Self::new();
        for label in labels {
            v.intern(&label.into());
        }
        v
    }

    /// Index of `label`, inserting it if unseen.
    pub fn intern(&mut self, label: &str) -> u32 {
        if let Some(&i) = self.index.get(label) {
            return i;
        }
        let i = self.labels.len() as u32;
        self.labels.push(label.to_string());
        self.index.insert(label.to_string(), i);
        i
    }

    pub fn get(&self, label: &str) -> Option<u32> {
        self.index.get(label).copied()
    }

    pub fn label(&self, index: u32) -> &str {
        &self.labels[index as usize]
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// SHA-256 over the ordered label list; identifies the vocabulary in
    /// checkpoint metadata.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for label in &self.labels {
            hasher.update(label.as_bytes());
            hasher.update([b'\n']);
        }
        hex::encode(hasher.finalize())
    }

    /// Dump as `index<TAB>label`, ascending index.
    pub fn write_tsv(&self, path: &Path) -> Result<(), KgError> {
        let mut w = BufWriter::new(File::create(path)?);
        for (i, label) in self.labels.iter().enumerate() {
            writeln!(w, "{i}\t{label}")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_tsv(path: &Path) -> Result<Self, KgError> {
        let reader = BufReader::new(File::open(path)?);
        let mut vocab = Vocabulary::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let bad = |message: &str| KgError::BadVocabFile {
                path: path.display().to_string(),
                line: lineno + 1,
                message: message.to_string(),
            };
            let (idx, label) = line.split_once('\t').ok_or_else(|| bad("missing tab"))?;
            let idx: u32 = idx.parse().map_err(|_| bad("non-numeric index"))?;
            if idx as usize != vocab.len() {
                return Err(bad("indices must be dense and ascending"));
            }
            if vocab.get(label).is_some() {
                return Err(bad("duplicate label"));
            }
            vocab.intern(label);
        }
        Ok(vocab)
    }
}

/// Which split a [`TripleSet`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
    All,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
            Split::All => "all",
        };
        f.write_str(s)
    }
}

/// Immutable, deduplicated triple collection with shared vocabularies and an
/// O(1) membership index. Safe to share read-only across threads.
#[derive(Debug, Clone)]
pub struct TripleSet {
    triples: Vec<Triple>,
    split: Split,
    entities: Arc<Vocabulary>,
    relations: Arc<Vocabulary>,
    members: HashSet<Triple>,
}

impl TripleSet {
    /// Validates indices and rejects duplicates; `triples` keep their order.
    pub fn new(
        triples: Vec<Triple>,
        split: Split,
        entities: Arc<Vocabulary>,
        relations: Arc<Vocabulary>,
    ) -> Result<Self, KgError> {
        let mut members = HashSet::with_capacity(triples.len());
        for t in &triples {
            for e in [t.head, t.tail] {
                if e.index() >= entities.len() {
                    return Err(KgError::EntityIndexOutOfRange {
                        index: e.0,
                        len: entities.len(),
                    });
                }
            }
            if t.relation.index() >= relations.len() {
                return Err(KgError::RelationIndexOutOfRange {
                    index: t.relation.0,
                    len: relations.len(),
                });
            }
            if !members.insert(*t) {
                return Err(KgError::DuplicateTriple(
                    entities.label(t.head.0).to_string(),
                    relations.label(t.relation.0).to_string(),
                    entities.label(t.tail.0).to_string(),
                ));
            }
        }
        Ok(TripleSet {
            triples,
            split,
            entities,
            relations,
            members,
        })
    }

    pub fn empty(split: Split) -> Self {
        TripleSet {
            triples: Vec::new(),
            split,
            entities: Arc::new(Vocabulary::new()),
            relations: Arc::new(Vocabulary::new()),
            members: HashSet::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn split(&self) -> Split {
        self.split
    }

    #[inline]
    pub fn contains(&self, triple: &Triple) -> bool {
        self.members.contains(triple)
    }

    pub fn entities(&self) -> &Arc<Vocabulary> {
        &self.entities
    }

    pub fn relations(&self) -> &Arc<Vocabulary> {
        &self.relations
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn relation_count(&self) -> usize {
        self.relations.len()
    }

    /// Keep exactly the triples whose relation label is listed; original order
    /// preserved, vocabularies shared unchanged.
    pub fn filter_by_relations<S: AsRef<str>>(&self, relations: &[S]) -> Result<Self, KgError> {
        let mut wanted = HashSet::new();
        for label in relations {
            let label = label.as_ref();
            let idx = self
                .relations
                .get(label)
                .ok_or_else(|| KgError::UnknownRelation(label.to_string()))?;
            wanted.insert(RelationId(idx));
        }
        let triples: Vec<Triple> = self
            .triples
            .iter()
            .filter(|t| wanted.contains(&t.relation))
            .copied()
            .collect();
        TripleSet::new(
            triples,
            self.split,
            Arc::clone(&self.entities),
            Arc::clone(&self.relations),
        )
    }

    /// Replace the triple list, keeping vocabularies; used by the perturbation
    /// module.
    pub fn with_triples(&self, triples: Vec<Triple>, split: Split) -> Result<Self, KgError> {
        TripleSet::new(
            triples,
            split,
            Arc::clone(&self.entities),
            Arc::clone(&self.relations),
        )
    }

    /// Write as `head<TAB>relation<TAB>tail` lines in stored order.
    pub fn write_tsv(&self, path: &Path) -> Result<(), KgError> {
        let mut w = BufWriter::new(File::create(path)?);
        for t in &self.triples {
            writeln!(
                w,
                "{}\t{}\t{}",
                self.entities.label(t.head.0),
                self.relations.label(t.relation.0),
                self.entities.label(t.tail.0)
            )?;
        }
        w.flush()?;
        Ok(())
    }

    /// Seeded shuffle-and-partition into train/valid/test. `valid_fraction`
    /// and `test_fraction` are taken off the top (floor counts); the rest is
    /// train.
    pub fn split_fractions(
        &self,
        valid_fraction: f64,
        test_fraction: f64,
        seed: u64,
    ) -> Result<(TripleSet, TripleSet, TripleSet), KgError> {
        assert!(
            (0.0..1.0).contains(&valid_fraction)
                && (0.0..1.0).contains(&test_fraction)
                && valid_fraction + test_fraction < 1.0,
            "split fractions must leave a non-empty train share"
        );
        let mut shuffled = self.triples.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        shuffled.shuffle(&mut rng);
        let n = shuffled.len();
        let n_valid = (valid_fraction * n as f64).floor() as usize;
        let n_test = (test_fraction * n as f64).floor() as usize;
        let test: Vec<Triple> = shuffled[..n_test].to_vec();
        let valid: Vec<Triple> = shuffled[n_test..n_test + n_valid].to_vec();
        let train: Vec<Triple> = shuffled[n_test + n_valid..].to_vec();
        Ok((
            self.with_triples(train, Split::Train)?,
            self.with_triples(valid, Split::Valid)?,
            self.with_triples(test, Split::Test)?,
        ))
    }
}

/// Whether loading builds fresh vocabularies or resolves against existing
/// ones (erroring on unseen labels).
#[derive(Clone)]
pub enum VocabMode {
    Build,
    Reuse {
        entities: Arc<Vocabulary>,
        relations: Arc<Vocabulary>,
    },
}

/// A loaded [`TripleSet`] plus the number of duplicate lines that were
/// dropped.
#[derive(Debug)]
pub struct LoadOutcome {
    pub set: TripleSet,
    pub duplicates_dropped: usize,
}

/// Load a triple TSV. Empty lines are skipped; duplicate triples are dropped
/// (count reported and logged); a line with other than 3 fields is an error.
pub fn load_triples(path: &Path, mode: VocabMode, split: Split) -> Result<LoadOutcome, KgError> {
    let reader = BufReader::new(File::open(path)?);
    let (mut entities, mut relations, reuse) = match mode {
        VocabMode::Build => (Vocabulary::new(), Vocabulary::new(), None),
        VocabMode::Reuse {
            entities,
            relations,
        } => (
            Vocabulary::new(),
            Vocabulary::new(),
            Some((entities, relations)),
        ),
    };

    let mut triples = Vec::new();
    let mut seen = HashSet::new();
    let mut duplicates_dropped = 0usize;

    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(KgError::MalformedLine {
                path: path.display().to_string(),
                line: lineno + 1,
                found: fields.len(),
            });
        }
        let (h, r, t) = (fields[0], fields[1], fields[2]);
        let triple = match &reuse {
            Some((ev, rv)) => Triple {
                head: EntityId(ev.get(h).ok_or_else(|| KgError::UnknownEntity(h.into()))?),
                relation: RelationId(
                    rv.get(r).ok_or_else(|| KgError::UnknownRelation(r.into()))?,
                ),
                tail: EntityId(ev.get(t).ok_or_else(|| KgError::UnknownEntity(t.into()))?),
            },
            None => Triple {
                head: EntityId(entities.intern(h)),
                relation: RelationId(relations.intern(r)),
                tail: EntityId(entities.intern(t)),
            },
        };
        if seen.insert(triple) {
            triples.push(triple);
        } else {
            duplicates_dropped += 1;
        }
    }

    if duplicates_dropped > 0 {
        log::info!(
            "{}: dropped {duplicates_dropped} duplicate triple(s)",
            path.display()
        );
    }

    let (entities, relations) = match reuse {
        Some((ev, rv)) => (ev, rv),
        None => (Arc::new(entities), Arc::new(relations)),
    };
    Ok(LoadOutcome {
        set: TripleSet::new(triples, split, entities, relations)?,
        duplicates_dropped,
    })
}

/// Entities grouped by the `Type` prefix of their `Type::Source:ID` label.
/// Pools partition the entity set; iteration order is sorted by type name and
/// each pool is sorted by label.
#[derive(Debug, Clone)]
pub struct EntityTypeIndex {
    pools: BTreeMap<String, Vec<EntityId>>,
}

impl EntityTypeIndex {
    pub fn pool(&self, entity_type: &str) -> Option<&[EntityId]> {
        self.pools.get(entity_type).map(|v| v.as_slice())
    }

    pub fn types(&self) -> impl Iterator<Item = &str> {
        self.pools.keys().map(|s| s.as_str())
    }

    pub fn pools(&self) -> &BTreeMap<String, Vec<EntityId>> {
        &self.pools
    }

    pub fn len(&self) -> usize {
        self.pools.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pools.is_empty()
    }
}

/// Group every entity by its type prefix. Errors on any label without `::`
/// or with an empty prefix.
pub fn build_type_index(vocab: &Vocabulary) -> Result<EntityTypeIndex, KgError> {
    let mut pools: BTreeMap<String, Vec<EntityId>> = BTreeMap::new();
    for (i, label) in vocab.labels().iter().enumerate() {
        let prefix = match label.split_once("::") {
            Some((prefix, _)) if !prefix.is_empty() => prefix,
            _ => return Err(KgError::MissingTypePrefix(label.clone())),
        };
        pools
            .entry(prefix.to_string())
            .or_default()
            .push(EntityId(i as u32));
    }
    for pool in pools.values_mut() {
        pool.sort_by(|a, b| vocab.label(a.0).cmp(vocab.label(b.0)));
    }
    Ok(EntityTypeIndex { pools })
}
