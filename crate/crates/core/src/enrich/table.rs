//! Per-entity text vectors: name and description embeddings concatenated
//! into one enriched vector, with prefix slices serving as anchors at the
//! KGE dimension.

use std::path::Path;

use crate::kg::Vocabulary;
use crate::matrix::Matrix;
use crate::vecio;

use super::cache::{embed_text, fetch_description, DescriptionCache, EmbeddingCache};
use super::client::LlmClient;
use super::prompt::PromptVariant;
use super::EnrichError;

/// A finite real vector from the embedding endpoint (or a slice of one).
#[derive(Debug, Clone, PartialEq)]
pub struct TextVector {
    pub values: Vec<f32>,
}

impl TextVector {
    pub fn new(values: Vec<f32>) -> Result<Self, EnrichError> {
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(EnrichError::NonFiniteEmbedding {
                context: format!("component value {bad}"),
            });
        }
        Ok(TextVector { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// `[name; description]` concatenation: output components `0..dim` equal the
/// name vector, the rest the description vector.
pub fn concat_enrichment(
    name_vector: &TextVector,
    description_vector: &TextVector,
) -> Result<TextVector, EnrichError> {
    if name_vector.dim() != description_vector.dim() {
        return Err(EnrichError::ShapeMismatch {
            left: name_vector.dim(),
            right: description_vector.dim(),
        });
    }
    let mut values = Vec::with_capacity(2 * name_vector.dim());
    values.extend_from_slice(&name_vector.values);
    values.extend_from_slice(&description_vector.values);
    Ok(TextVector { values })
}

/// First `k` components of the concatenated vector; the anchor at KGE
/// dimension `k`.
pub fn slice_anchor(concat: &TextVector, k: usize) -> Result<TextVector, EnrichError> {
    if k == 0 || k > concat.dim() {
        return Err(EnrichError::BadSlice {
            k,
            dim: concat.dim(),
        });
    }
    Ok(TextVector {
        values: concat.values[..k].to_vec(),
    })
}

/// One concatenated vector per entity, rows in entity-index order. The name
/// half is columns `0..dim/2`, the description half `dim/2..dim`.
#[derive(Debug, Clone)]
pub struct EnrichmentTable {
    labels: Vec<String>,
    concat: Matrix<f32>,
}

impl EnrichmentTable {
    /// Assemble from per-entity name/description vectors (same order as
    /// `labels`).
    pub fn build(
        labels: Vec<String>,
        name_vectors: &[TextVector],
        description_vectors: &[TextVector],
    ) -> Result<Self, EnrichError> {
        assert_eq!(labels.len(), name_vectors.len());
        assert_eq!(labels.len(), description_vectors.len());
        let mut rows: Vec<TextVector> = Vec::with_capacity(labels.len());
        for (n, d) in name_vectors.iter().zip(description_vectors) {
            rows.push(concat_enrichment(n, d)?);
        }
        let cols = rows.first().map(|r| r.dim()).unwrap_or(0);
        if let Some(bad) = rows.iter().find(|r| r.dim() != cols) {
            return Err(EnrichError::ShapeMismatch {
                left: cols,
                right: bad.dim(),
            });
        }
        let concat = Matrix::from_fn(rows.len(), cols, |r, c| rows[r].values[c]);
        Ok(EnrichmentTable { labels, concat })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Dimension of one embedding-endpoint vector (half the concat width).
    pub fn base_dim(&self) -> usize {
        self.concat.cols() / 2
    }

    pub fn concat_dim(&self) -> usize {
        self.concat.cols()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn name_vector(&self, entity: usize) -> TextVector {
        TextVector {
            values: self.concat.row(entity)[..self.base_dim()].to_vec(),
        }
    }

    pub fn description_vector(&self, entity: usize) -> TextVector {
        TextVector {
            values: self.concat.row(entity)[self.base_dim()..].to_vec(),
        }
    }

    pub fn concat_vector(&self, entity: usize) -> TextVector {
        TextVector {
            values: self.concat.row(entity).to_vec(),
        }
    }

    pub fn anchor_vector(&self, entity: usize, k: usize) -> Result<TextVector, EnrichError> {
        slice_anchor(&self.concat_vector(entity), k)
    }

    /// All anchors as an `|E| x k` matrix — the shape `init_params` and the
    /// anchor loss consume.
    pub fn anchor_matrix(&self, k: usize) -> Result<Matrix<f32>, EnrichError> {
        if k == 0 || k > self.concat.cols() {
            return Err(EnrichError::BadSlice {
                k,
                dim: self.concat.cols(),
            });
        }
        Ok(Matrix::from_fn(self.concat.rows(), k, |r, c| {
            self.concat.row(r)[c]
        }))
    }

    /// Write the concatenated vectors (KGEV binary) and the `<path>.labels`
    /// sidecar.
    pub fn export(&self, path: &Path) -> Result<(), EnrichError> {
        vecio::write_vectors(path, &self.concat)?;
        vecio::write_labels(&labels_sidecar(path), &self.labels)?;
        Ok(())
    }

    /// Read a table back; when `expect` is given, row labels must match the
    /// vocabulary exactly (same order, same count).
    pub fn import(path: &Path, expect: Option<&Vocabulary>) -> Result<Self, EnrichError> {
        let concat: Matrix<f32> = vecio::read_vectors(path)?;
        let labels = vecio::read_labels(&labels_sidecar(path), concat.rows())?;
        if let Some(vocab) = expect {
            if vocab.len() != labels.len() {
                return Err(EnrichError::RowCountMismatch {
                    expected: vocab.len(),
                    found: labels.len(),
                });
            }
            for (row, label) in labels.iter().enumerate() {
                let expected = vocab.label(row as u32);
                if expected != label {
                    return Err(EnrichError::LabelMismatch {
                        row,
                        expected: expected.to_string(),
                        found: label.clone(),
                    });
                }
            }
        }
        Ok(EnrichmentTable { labels, concat })
    }
}

fn labels_sidecar(path: &Path) -> std::path::PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".labels");
    std::path::PathBuf::from(os)
}

/// Outcome counters for one enrichment pass.
#[derive(Debug, Clone, Default)]
pub struct EnrichReport {
    pub total: usize,
    pub succeeded: usize,
    /// Chat + embedding requests that actually hit the network.
    pub network_requests: usize,
    /// (entity label, error) for every entity that could not be enriched.
    pub failures: Vec<(String, String)>,
}

/// Enrich every label: fetch (or recall) its description, embed name and
/// description, concatenate. `client: None` is offline mode — cache misses
/// become per-entity failures instead of network calls. Returns the table
/// only if every entity succeeded; the report always carries the counts.
pub fn enrich_entities(
    client: Option<&LlmClient>,
    desc_cache: &mut DescriptionCache,
    emb_cache: &mut EmbeddingCache,
    labels: &[String],
    variant: PromptVariant,
    temperature: f64,
    chat_model: &str,
    embed_model: &str,
) -> (Option<EnrichmentTable>, EnrichReport) {
    let mut report = EnrichReport {
        total: labels.len(),
        ..EnrichReport::default()
    };
    let mut names: Vec<TextVector> = Vec::with_capacity(labels.len());
    let mut descs: Vec<TextVector> = Vec::with_capacity(labels.len());

    for label in labels {
        match enrich_one(
            client,
            desc_cache,
            emb_cache,
            label,
            variant,
            temperature,
            chat_model,
            embed_model,
            &mut report.network_requests,
        ) {
            Ok((name_vec, desc_vec)) => {
                names.push(name_vec);
                descs.push(desc_vec);
                report.succeeded += 1;
            }
            Err(e) => report.failures.push((label.clone(), e.to_string())),
        }
    }

    if report.failures.is_empty() {
        match EnrichmentTable::build(labels.to_vec(), &names, &descs) {
            Ok(table) => (Some(table), report),
            Err(e) => {
                report.failures.push(("<table assembly>".to_string(), e.to_string()));
                (None, report)
            }
        }
    } else {
        (None, report)
    }
}

#[allow(clippy::too_many_arguments)]
fn enrich_one(
    client: Option<&LlmClient>,
    desc_cache: &mut DescriptionCache,
    emb_cache: &mut EmbeddingCache,
    label: &str,
    variant: PromptVariant,
    temperature: f64,
    chat_model: &str,
    embed_model: &str,
    network_requests: &mut usize,
) -> Result<(TextVector, TextVector), EnrichError> {
    let description = match client {
        Some(client) => {
            let (record, hit) =
                fetch_description(client, desc_cache, label, variant, temperature)?;
            if !hit {
                *network_requests += 1;
            }
            record.text
        }
        None => {
            desc_cache
                .get(label, variant, temperature, chat_model)
                .ok_or(EnrichError::OfflineMiss {
                    what: "description",
                    entity: label.to_string(),
                })?
                .text
                .clone()
        }
    };

    let mut embed = |text: &str| -> Result<TextVector, EnrichError> {
        match client {
            Some(client) => {
                let (values, hit) = embed_text(client, emb_cache, text)?;
                if !hit {
                    *network_requests += 1;
                }
                TextVector::new(values)
            }
            None => emb_cache
                .get(embed_model, text)
                .map(|v| TextVector {
                    values: v.to_vec(),
                })
                .ok_or(EnrichError::OfflineMiss {
                    what: "embedding",
                    entity: label.to_string(),
                }),
        }
    };

    let name_vec = embed(label)?;
    let desc_vec = embed(&description)?;
    Ok((name_vec, desc_vec))
}
