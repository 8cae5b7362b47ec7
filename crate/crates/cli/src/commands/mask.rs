//! `mask-ablate`: progressively mask the cached entity descriptions,
//! re-embed, retrain, and evaluate — one table row per masking ratio.

use std::path::PathBuf;

use anchored_kge::enrich::{
    mask_descriptions, ClientConfig, DescriptionCache, DescriptionRecord, EmbeddingCache,
    EnrichmentTable, LlmClient, PromptVariant, TextVector,
};
use anchored_kge::eval::{render_comparison_table, EvalProtocol, MetricsReport};
use anchored_kge::kg::Split;
use anchored_kge::kge::{init_params, Init};
use anchored_kge::train::{train, TrainConfig, TrainOptions};
use clap::Args as ClapArgs;
use serde::Serialize;

use super::{
    candidate_pool, load_train_set, load_with_vocab, map_train_err, parse_model_kind,
    parse_ratios, relation_ids_for, vocab_pair_hash, Failure, ENV_API_KEY,
};
use crate::manifest::{write_atomic, ManifestBuilder};

#[derive(Debug, ClapArgs)]
pub struct Args {
    /// Training triples (TSV).
    #[arg(long)]
    pub triples: PathBuf,
    /// Test triples evaluated after each retraining.
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub config: PathBuf,
    /// Score function: transe-l1, transe-l2, distmult, or rotate.
    #[arg(long)]
    pub model: String,
    /// Cache directory holding the original descriptions (run `enrich`
    /// first) and the embedding cache.
    #[arg(long)]
    pub cache_dir: PathBuf,
    /// Masking ratios, comma-separated.
    #[arg(long, default_value = "0,0.2,0.4,0.6")]
    pub ratios: String,
    /// Seed for masking and training.
    #[arg(long)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Embedding endpoint for the masked texts; omit with --offline if the
    /// embedding cache is already warm.
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub offline: bool,
    #[arg(long, default_value = "gpt-4o-mini")]
    pub chat_model: String,
    #[arg(long, default_value = "text-embedding-3-small")]
    pub embed_model: String,
    /// Prompt variant the cached descriptions were fetched with.
    #[arg(long, default_value = "structured")]
    pub prompt: String,
    #[arg(long, default_value_t = 0.7)]
    pub temperature: f64,
    #[arg(long, default_value_t = 3)]
    pub retry_budget: usize,
    #[arg(long, default_value_t = 250)]
    pub backoff_ms: u64,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub relations: Option<String>,
    #[arg(long)]
    pub pool_type: Option<String>,
    #[arg(long)]
    pub num_negatives: Option<usize>,
    #[arg(long, default_value_t = 5)]
    pub trials: u32,
    /// Candidate-sampling seed (default: --seed).
    #[arg(long)]
    pub eval_seed: Option<u64>,
}

impl Args {
    pub fn manifest_path(&self) -> PathBuf {
        self.out.join("manifest.json")
    }
}

#[derive(Serialize)]
struct AblationRow {
    ratio: f64,
    masked_tokens: usize,
    metrics: MetricsReport,
}

#[derive(Serialize)]
struct MaskedLine<'a> {
    label: &'a str,
    text: &'a str,
    masked_tokens: usize,
}

fn embed_or_cache(
    client: Option<&LlmClient>,
    cache: &mut EmbeddingCache,
    model: &str,
    text: &str,
) -> Result<Vec<f32>, Failure> {
    match client {
        Some(client) => anchored_kge::enrich::embed_text(client, cache, text)
            .map(|(values, _)| values)
            .map_err(|e| Failure::usage(e.to_string())),
        None => cache.get(model, text).map(<[f32]>::to_vec).ok_or_else(|| {
            Failure::usage(format!(
                "offline, but the embedding cache has no entry for a masked text \
                 ({} chars); provide --endpoint",
                text.len()
            ))
        }),
    }
}

pub fn run(args: &Args, mb: &mut ManifestBuilder) -> Result<(), Failure> {
    let variant: PromptVariant = args.prompt.parse().map_err(Failure::usage)?;
    let ratios = parse_ratios(&args.ratios)?;
    mb.input(&args.config)?;
    let mut config = TrainConfig::load(&args.config).map_err(map_train_err)?;
    config.seed = args.seed;
    if let Some(threads) = args.threads {
        config.threads = threads;
    }
    config.validate().map_err(map_train_err)?;
    let kind = parse_model_kind(&args.model)?;

    mb.input(&args.triples)?;
    mb.input(&args.test)?;
    let dataset = load_train_set(&args.triples)?;
    let test_set = load_with_vocab(
        &args.test,
        dataset.entities(),
        dataset.relations(),
        Split::Test,
    )?;
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
        let mut cc = ClientConfig::new(base);
        cc.api_key = Some(key);
        cc.chat_model = args.chat_model.clone();
        cc.embed_model = args.embed_model.clone();
        cc.temperature = args.temperature;
        cc.retry_budget = args.retry_budget;
        cc.backoff_base_ms = args.backoff_ms;
        Some(LlmClient::new(cc).map_err(|e| Failure::usage(e.to_string()))?)
    };

    let mut desc_cache = DescriptionCache::open(&args.cache_dir.join("descriptions.jsonl"))
        .map_err(|e| Failure::usage(e.to_string()))?;
    let mut emb_cache = EmbeddingCache::open(&args.cache_dir.join("embeddings.jsonl"))
        .map_err(|e| Failure::usage(e.to_string()))?;

    // Original descriptions in vocabulary order; the ablation masks these.
    let mut records: Vec<DescriptionRecord> = Vec::with_capacity(labels.len());
    for label in &labels {
        let record = match &client {
            Some(client) => anchored_kge::enrich::fetch_description(
                client,
                &mut desc_cache,
                label,
                variant,
                args.temperature,
            )
            .map(|(record, _)| record)
            .map_err(|e| Failure::usage(e.to_string()))?,
            None => desc_cache
                .get(label, variant, args.temperature, &args.chat_model)
                .cloned()
                .ok_or_else(|| {
                    Failure::usage(format!(
                        "description cache is cold for `{label}`; run `enrich` first \
                         or provide --endpoint"
                    ))
                })?,
        };
        records.push(record);
    }

    let rel_ids = relation_ids_for(args.relations.as_deref(), dataset.relations())?;
    let pool = candidate_pool(args.pool_type.as_deref(), dataset.entities())?;
    let eval_seed = args.eval_seed.unwrap_or(args.seed);
    let num_negatives = args
        .num_negatives
        .unwrap_or_else(|| 50.min(pool.len().saturating_sub(1)).max(1));
    let mut protocol = EvalProtocol::sampled(pool, rel_ids, eval_seed);
    protocol.num_negatives = num_negatives;
    protocol.trials = args.trials;
    protocol.validate().map_err(super::eval::map_eval_err)?;
    mb.config_hash(config.content_hash());
    mb.seed("train", config.seed);
    mb.seed("mask", args.seed);
    mb.seed("protocol", eval_seed);

    let vocab_hash = vocab_pair_hash(dataset.entities(), dataset.relations());
    let mut rows: Vec<AblationRow> = Vec::new();
    let mut table_rows: Vec<(String, MetricsReport)> = Vec::new();
    for &ratio in &ratios {
        let masked =
            mask_descriptions(&records, ratio, args.seed).map_err(|e| Failure::usage(e.to_string()))?;

        let mut artifact = String::new();
        let mut masked_total = 0usize;
        for record in &masked {
            let count = record
                .text
                .split_whitespace()
                .filter(|token| *token == "[MASK]")
                .count();
            masked_total += count;
            let line = MaskedLine {
                label: &record.entity_label,
                text: &record.text,
                masked_tokens: count,
            };
            artifact.push_str(&serde_json::to_string(&line).expect("masked line serializes"));
            artifact.push('\n');
        }
        let artifact_path = args.out.join(format!("masked_descriptions_{ratio}.jsonl"));
        write_atomic(&artifact_path, artifact.as_bytes())
            .map_err(|e| Failure::internal(e.to_string()))?;
        mb.output(&artifact_path);

        let mut names: Vec<TextVector> = Vec::with_capacity(labels.len());
        let mut descs: Vec<TextVector> = Vec::with_capacity(labels.len());
        for (label, record) in labels.iter().zip(&masked) {
            let name = embed_or_cache(client.as_ref(), &mut emb_cache, &args.embed_model, label)?;
            let desc =
                embed_or_cache(client.as_ref(), &mut emb_cache, &args.embed_model, &record.text)?;
            names.push(TextVector::new(name).map_err(|e| Failure::usage(e.to_string()))?);
            descs.push(TextVector::new(desc).map_err(|e| Failure::usage(e.to_string()))?);
        }
        let table = EnrichmentTable::build(labels.clone(), &names, &descs)
            .map_err(|e| Failure::usage(e.to_string()))?;
        let anchors = table
            .anchor_matrix(config.dim)
            .map_err(|e| Failure::usage(e.to_string()))?;

        let initial = init_params(
            dataset.entity_count(),
            dataset.relation_count(),
            config.dim,
            kind,
            config.gamma,
            Init::TextAnchored {
                anchors: &anchors,
                seed: config.seed,
            },
        )
        .map_err(|e| Failure::usage(e.to_string()))?;
        let options = TrainOptions {
            checkpoint_dir: None,
            vocab_hash: vocab_hash.clone(),
            config_hash: config.content_hash(),
        };
        let outcome = train(&dataset, Some(&anchors), initial, &config, &options)
            .map_err(map_train_err)?;
        let report = anchored_kge::eval::evaluate(&outcome.params, &test_set, &protocol)
            .map_err(super::eval::map_eval_err)?;

        table_rows.push((format!("mask={ratio}"), report.clone()));
        rows.push(AblationRow {
            ratio,
            masked_tokens: masked_total,
            metrics: report,
        });
    }

    let mut csv = String::from("ratio,masked_tokens,mr,mrr,h1,h3,h10,auc\n");
    for row in &rows {
        let m = &row.metrics;
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            row.ratio,
            row.masked_tokens,
            m.mr,
            m.mrr,
            m.hits[&1],
            m.hits[&3],
            m.hits[&10],
            m.auc
        ));
    }
    let csv_path = args.out.join("mask_ablation.csv");
    let json_path = args.out.join("mask_ablation.json");
    write_atomic(&csv_path, csv.as_bytes()).map_err(|e| Failure::internal(e.to_string()))?;
    let mut body = serde_json::to_string_pretty(&rows).expect("rows serialize");
    body.push('\n');
    write_atomic(&json_path, body.as_bytes()).map_err(|e| Failure::internal(e.to_string()))?;
    mb.output(&csv_path);
    mb.output(&json_path);

    print!("{}", render_comparison_table(&table_rows));
    Ok(())
}
