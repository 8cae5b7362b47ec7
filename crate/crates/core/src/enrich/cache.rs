//! On-disk caches for generated descriptions and text embeddings.
//!
//! Both caches are JSON Lines files rewritten atomically (temp file +
//! rename) on every insert, so a crash never leaves a partial line.
//! Description records are keyed by (entity_label, variant, temperature,
//! model); embeddings by (model, sha256 of the text).

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::client::LlmClient;
use super::prompt::{render_prompt, PromptVariant};
use super::EnrichError;

/// One cached chat completion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptionRecord {
    pub entity_label: String,
    pub variant: PromptVariant,
    pub temperature: f64,
    pub model: String,
    pub text: String,
    /// RFC 3339 timestamp of the original fetch.
    pub fetched_at: String,
}

impl DescriptionRecord {
    fn key(&self) -> DescKey {
        desc_key(&self.entity_label, self.variant, self.temperature, &self.model)
    }
}

/// Temperature participates in the key by exact bit pattern; JSON round-trips
/// f64 losslessly so 0.7 on disk stays 0.7.
type DescKey = (String, PromptVariant, u64, String);

fn desc_key(label: &str, variant: PromptVariant, temperature: f64, model: &str) -> DescKey {
    (
        label.to_string(),
        variant,
        temperature.to_bits(),
        model.to_string(),
    )
}

#[derive(Debug)]
pub struct DescriptionCache {
    path: PathBuf,
    records: Vec<DescriptionRecord>,
    index: HashMap<DescKey, usize>,
}

impl DescriptionCache {
    /// Load (or start) the cache at `path`; a missing file is an empty cache.
    pub fn open(path: &Path) -> Result<Self, EnrichError> {
        let mut cache = DescriptionCache {
            path: path.to_path_buf(),
            records: Vec::new(),
            index: HashMap::new(),
        };
        if path.exists() {
            let contents = std::fs::read_to_string(path)?;
            for (lineno, line) in contents.lines().enumerate() {
                if line.is_empty() {
                    continue;
                }
                let record: DescriptionRecord =
                    serde_json::from_str(line).map_err(|e| EnrichError::CorruptCache {
                        path: path.display().to_string(),
                        line: lineno + 1,
                        message: e.to_string(),
                    })?;
                if cache.index.contains_key(&record.key()) {
                    return Err(EnrichError::CorruptCache {
                        path: path.display().to_string(),
                        line: lineno + 1,
                        message: format!(
                            "duplicate key ({}, {}, {}, {})",
                            record.entity_label, record.variant, record.temperature, record.model
                        ),
                    });
                }
                cache.index.insert(record.key(), cache.records.len());
                cache.records.push(record);
            }
        }
        Ok(cache)
    }

    pub fn get(
        &self,
        label: &str,
        variant: PromptVariant,
        temperature: f64,
        model: &str,
    ) -> Option<&DescriptionRecord> {
        self.index
            .get(&desc_key(label, variant, temperature, model))
            .map(|&i| &self.records[i])
    }

    /// Insert and persist; overwrites are a bug surfaced as corrupt-cache.
    pub fn insert(&mut self, record: DescriptionRecord) -> Result<(), EnrichError> {
        if self.index.contains_key(&record.key()) {
            return Err(EnrichError::CorruptCache {
                path: self.path.display().to_string(),
                line: 0,
                message: format!("key already cached: {}", record.entity_label),
            });
        }
        self.index.insert(record.key(), self.records.len());
        self.records.push(record);
        self.persist()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[DescriptionRecord] {
        &self.records
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn persist(&self) -> Result<(), EnrichError> {
        let mut out = String::new();
        for record in &self.records {
            out.push_str(&serde_json::to_string(record)?);
            out.push('\n');
        }
        atomic_write(&self.path, out.as_bytes()).map_err(EnrichError::Io)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EmbeddingRecord {
    model: String,
    text_sha256: String,
    values: Vec<f32>,
}

#[derive(Debug)]
pub struct EmbeddingCache {
    path: PathBuf,
    records: Vec<EmbeddingRecord>,
    index: HashMap<(String, String), usize>,
    /// First-seen dimension per model; later inserts must agree.
    dims: HashMap<String, usize>,
}

impl EmbeddingCache {
    pub fn open(path: &Path) -> Result<Self, EnrichError> {
        let mut cache = EmbeddingCache {
            path: path.to_path_buf(),
            records: Vec::new(),
            index: HashMap::new(),
            dims: HashMap::new(),
        };
        if path.exists() {
            let contents = std::fs::read_to_string(path)?;
            for (lineno, line) in contents.lines().enumerate() {
                if line.is_empty() {
                    continue;
                }
                let record: EmbeddingRecord =
                    serde_json::from_str(line).map_err(|e| EnrichError::CorruptCache {
                        path: path.display().to_string(),
                        line: lineno + 1,
                        message: e.to_string(),
                    })?;
                cache.check_dim(&record.model, record.values.len())?;
                cache
                    .dims
                    .insert(record.model.clone(), record.values.len());
                cache.index.insert(
                    (record.model.clone(), record.text_sha256.clone()),
                    cache.records.len(),
                );
                cache.records.push(record);
            }
        }
        Ok(cache)
    }

    pub fn get(&self, model: &str, text: &str) -> Option<&[f32]> {
        self.index
            .get(&(model.to_string(), text_hash(text)))
            .map(|&i| self.records[i].values.as_slice())
    }

    pub fn insert(&mut self, model: &str, text: &str, values: Vec<f32>) -> Result<(), EnrichError> {
        self.check_dim(model, values.len())?;
        self.dims.insert(model.to_string(), values.len());
        let record = EmbeddingRecord {
            model: model.to_string(),
            text_sha256: text_hash(text),
            values,
        };
        self.index.insert(
            (record.model.clone(), record.text_sha256.clone()),
            self.records.len(),
        );
        self.records.push(record);
        self.persist()
    }

    /// Dimension this model's vectors have, if any are cached.
    pub fn dim(&self, model: &str) -> Option<usize> {
        self.dims.get(model).copied()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn check_dim(&self, model: &str, found: usize) -> Result<(), EnrichError> {
        if let Some(&expected) = self.dims.get(model) {
            if expected != found {
                return Err(EnrichError::DimensionMismatch {
                    model: model.to_string(),
                    expected,
                    found,
                });
            }
        }
        Ok(())
    }

    fn persist(&self) -> Result<(), EnrichError> {
        let mut out = String::new();
        for record in &self.records {
            out.push_str(&serde_json::to_string(record)?);
            out.push('\n');
        }
        atomic_write(&self.path, out.as_bytes()).map_err(EnrichError::Io)
    }
}

/// Hex SHA-256 of a text; the embedding-cache key component.
pub fn text_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn atomic_write(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}

/// Cached description lookup/fetch. A cache hit returns without touching the
/// network; a miss renders the prompt, queries the chat endpoint at
/// `temperature`, persists, and returns. The bool is true on a cache hit.
pub fn fetch_description(
    client: &LlmClient,
    cache: &mut DescriptionCache,
    entity_label: &str,
    variant: PromptVariant,
    temperature: f64,
) -> Result<(DescriptionRecord, bool), EnrichError> {
    let model = client.config().chat_model.clone();
    if let Some(record) = cache.get(entity_label, variant, temperature, &model) {
        return Ok((record.clone(), true));
    }
    let prompt = render_prompt(entity_label, variant)?;
    let text = client.chat_at(&prompt, temperature)?;
    if text.is_empty() {
        return Err(EnrichError::EmptyCompletion {
            entity: entity_label.to_string(),
        });
    }
    let record = DescriptionRecord {
        entity_label: entity_label.to_string(),
        variant,
        temperature,
        model,
        text,
        fetched_at: Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true),
    };
    cache.insert(record.clone())?;
    Ok((record, false))
}

/// Cached embedding lookup/fetch; keyed by (model, text hash). The bool is
/// true on a cache hit.
pub fn embed_text(
    client: &LlmClient,
    cache: &mut EmbeddingCache,
    text: &str,
) -> Result<(Vec<f32>, bool), EnrichError> {
    let model = client.config().embed_model.clone();
    if let Some(values) = cache.get(&model, text) {
        return Ok((values.to_vec(), true));
    }
    let values = client.embed(text)?;
    cache.insert(&model, text, values.clone())?;
    Ok((values, false))
}
