//! Textual enrichment: prompt rendering, chat/embedding HTTP clients,
//! description and embedding caches, the concatenated name+description
//! vectors with their anchor slices, and the description-masking ablation.

mod cache;
mod client;
mod mask;
mod prompt;
mod table;

pub use cache::{
    embed_text, fetch_description, text_hash, DescriptionCache, DescriptionRecord, EmbeddingCache,
};
pub use client::{ClientConfig, LlmClient};
pub use mask::{mask_description, mask_descriptions};
pub use prompt::{render_prompt, PromptVariant, STRUCTURED_PROMPT_TEMPLATE};
pub use table::{
    concat_enrichment, enrich_entities, slice_anchor, EnrichReport, EnrichmentTable, TextVector,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnrichError {
    #[error("entity label must be non-empty")]
    EmptyEntityLabel,
    #[error("temperature {0} outside [0, 2]")]
    BadTemperature(f64),
    #[error("chat endpoint returned an empty completion for `{entity}`")]
    EmptyCompletion { entity: String },
    #[error("HTTP {status} from {url} (permanent, not retried): {body}")]
    Permanent {
        status: u16,
        url: String,
        body: String,
    },
    #[error("retry budget exhausted after {attempts} attempt(s) against {url}: {last}")]
    Transient {
        attempts: usize,
        url: String,
        last: String,
    },
    #[error("response from {url} missing `{field}`")]
    BadResponse { url: String, field: &'static str },
    #[error("embedding model `{model}` returned dim {found}, previous vectors have dim {expected}")]
    DimensionMismatch {
        model: String,
        expected: usize,
        found: usize,
    },
    #[error("vectors have mismatched dimensions: {left} vs {right}")]
    ShapeMismatch { left: usize, right: usize },
    #[error("anchor slice length {k} invalid for a dim-{dim} vector (need 1 <= k <= dim)")]
    BadSlice { k: usize, dim: usize },
    #[error("non-finite component in embedding for `{context}`")]
    NonFiniteEmbedding { context: String },
    #[error("cache file {path}:{line}: {message}")]
    CorruptCache {
        path: String,
        line: usize,
        message: String,
    },
    #[error("masking ratio {0} outside [0, 1]")]
    BadMaskRatio(f64),
    #[error(
        "enrichment table has {found} row(s), vocabulary has {expected}"
    )]
    RowCountMismatch { expected: usize, found: usize },
    #[error("enrichment table row {row} is `{found}`, vocabulary says `{expected}`")]
    LabelMismatch {
        row: usize,
        expected: String,
        found: String,
    },
    #[error("offline mode with a cold cache: no cached {what} for `{entity}`")]
    OfflineMiss { what: &'static str, entity: String },
    #[error(transparent)]
    VecIo(#[from] crate::vecio::VecIoError),
    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
