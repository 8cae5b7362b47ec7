//! `enrich`: describe and embed every entity of a triple file, then export
//! the concatenated text-vector table that later anchors training.

use std::path::PathBuf;

use anchored_kge::enrich::{
    ClientConfig, DescriptionCache, EmbeddingCache, LlmClient, PromptVariant,
};
use clap::Args as ClapArgs;

use super::{load_train_set, Failure, ENV_API_KEY};
use crate::manifest::{path_with_suffix, write_atomic, ManifestBuilder};

#[derive(Debug, ClapArgs)]
pub struct Args {
    /// Triple TSV whose entity vocabulary gets enriched.
    #[arg(long)]
    pub triples: PathBuf,
    /// Output vector table; a `.labels` sidecar is written next to it.
    #[arg(long)]
    pub out: PathBuf,
    /// Directory holding the description and embedding caches.
    #[arg(long)]
    pub cache_dir: PathBuf,
    /// Endpoint base URL, e.g. `https://api.example.com/v1`.
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Serve everything from the caches; any miss fails that entity.
    #[arg(long)]
    pub offline: bool,
    #[arg(long, default_value = "gpt-4o-mini")]
    pub chat_model: String,
    #[arg(long, default_value = "text-embedding-3-small")]
    pub embed_model: String,
    /// Description prompt variant: structured, expert, or noprompt.
    #[arg(long, default_value = "structured")]
    pub prompt: String,
    /// Sampling temperature for description requests.
    #[arg(long, default_value_t = 0.7)]
    pub temperature: f64,
    /// Retries per request after the first attempt (transient failures only).
    #[arg(long, default_value_t = 3)]
    pub retry_budget: usize,
    /// First retry backoff in milliseconds; doubles per retry.
    #[arg(long, default_value_t = 250)]
    pub backoff_ms: u64,
}

impl Args {
    pub fn manifest_path(&self) -> PathBuf {
        path_with_suffix(&self.out, ".manifest.json")
    }
}

pub fn run(args: &Args, mb: &mut ManifestBuilder) -> Result<(), Failure> {
    let variant: PromptVariant = args.prompt.parse().map_err(Failure::usage)?;
    mb.input(&args.triples)?;
    let dataset = load_train_set(&args.triples)?;
    let labels = dataset.entities().labels().to_vec();

    let client = if args.offline {
        None
    } else {
        let base = args
            .endpoint
            .clone()
            .ok_or_else(|| Failure::usage("--endpoint is required unless --offline"))?;
        if !(base.starts_with("http://") || base.starts_with("https://")) {
            return Err(Failure::usage(format!(
                "invalid endpoint URL `{base}`: expected an http(s) base URL"
            )));
        }
        let key = std::env::var(ENV_API_KEY).map_err(|_| {
            Failure::usage(format!(
                "{ENV_API_KEY} is not set; export an API key or run with --offline"
            ))
        })?;
        let mut config = ClientConfig::new(base);
        config.api_key = Some(key);
        config.chat_model = args.chat_model.clone();
        config.embed_model = args.embed_model.clone();
        config.temperature = args.temperature;
        config.retry_budget = args.retry_budget;
        config.backoff_base_ms = args.backoff_ms;
        Some(LlmClient::new(config).map_err(|e| Failure::usage(e.to_string()))?)
    };

    std::fs::create_dir_all(&args.cache_dir)
        .map_err(|e| Failure::usage(format!("cannot create {}: {e}", args.cache_dir.display())))?;
    let mut desc_cache = DescriptionCache::open(&args.cache_dir.join("descriptions.jsonl"))
        .map_err(|e| Failure::usage(e.to_string()))?;
    let mut emb_cache = EmbeddingCache::open(&args.cache_dir.join("embeddings.jsonl"))
        .map_err(|e| Failure::usage(e.to_string()))?;

    let (table, report) = anchored_kge::enrich::enrich_entities(
        client.as_ref(),
        &mut desc_cache,
        &mut emb_cache,
        &labels,
        variant,
        args.temperature,
        &args.chat_model,
        &args.embed_model,
    );
    println!(
        "coverage: {}/{} entities enriched, {} network request(s), {} failure(s)",
        report.succeeded,
        report.total,
        report.network_requests,
        report.failures.len()
    );

    match table {
        Some(table) => {
            // Stage under a temp name so a crash never leaves a partial table.
            let tmp = path_with_suffix(&args.out, ".tmp");
            table
                .export(&tmp)
                .map_err(|e| Failure::internal(format!("writing {}: {e}", tmp.display())))?;
            let rename = |from: &std::path::Path, to: &std::path::Path| {
                std::fs::rename(from, to)
                    .map_err(|e| Failure::internal(format!("renaming {}: {e}", to.display())))
            };
            rename(&tmp, &args.out)?;
            rename(
                &path_with_suffix(&tmp, ".labels"),
                &path_with_suffix(&args.out, ".labels"),
            )?;
            mb.output(&args.out);
            mb.output(path_with_suffix(&args.out, ".labels"));
            println!("wrote {}", args.out.display());
            Ok(())
        }
        None => {
            let list = path_with_suffix(&args.out, ".failures.tsv");
            let mut body = String::new();
            for (label, error) in &report.failures {
                body.push_str(label);
                body.push('\t');
                body.push_str(error);
                body.push('\n');
            }
            write_atomic(&list, body.as_bytes())
                .map_err(|e| Failure::internal(format!("writing {}: {e}", list.display())))?;
            mb.output(&list);
            Err(Failure::usage(format!(
                "enrichment failed for {}/{} entities; no vector table written; details: {}",
                report.failures.len(),
                report.total,
                list.display()
            )))
        }
    }
}
