//! Ranking evaluation for drug repurposing: each test triple's true tail is
//! ranked against sampled candidate tails over the treatment relations,
//! trials are repeated with fresh candidate draws, and MR / MRR / Hits@N /
//! AUC are averaged across trials.
//!
//! Scores are dissimilarities throughout: lower = more plausible, rank 1 =
//! best.

use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{EntityId, RelationId, Triple, TripleSet};
use crate::kge::{score, ModelParams};
use crate::matrix::Scalar;

/// DRKG relation labels treated as "compound treats disease" when building
/// the default evaluation protocol.
pub const DEFAULT_TREATMENT_RELATIONS: [&str; 3] = [
    "Hetionet::CtD::Compound:Disease",
    "GNBR::T::Compound:Disease",
    "DRUGBANK::treats::Compound:Disease",
];

/// Hits@N cutoffs reported everywhere.
pub const HITS_NS: [u32; 3] = [1, 3, 10];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid evaluation protocol: {0}")]
    BadProtocol(String),
    #[error("no test triples left after filtering to the protocol relations")]
    EmptyTestSet,
    #[error("ranking over a single candidate: AUC is undefined")]
    DegenerateCandidates,
    #[error("no rank results to aggregate")]
    EmptyResults,
}

/// How the candidate tails for each test triple are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalMode {
    /// `num_negatives` tails sampled per triple and trial (the reported
    /// protocol).
    Sampled,
    /// Rank against the entire candidate pool, excluding tails that form a
    /// known true triple; deterministic, so a single trial is recorded.
    FilteredFull,
}

#[derive(Debug, Clone)]
pub struct EvalProtocol {
    /// Candidate tails (typically one entity-type pool, e.g. all diseases).
    pub candidate_pool: Vec<EntityId>,
    pub num_negatives: usize,
    /// Test triples are restricted to these relations before ranking.
    pub relations: Vec<RelationId>,
    pub trials: u32,
    pub seed: u64,
    pub mode: EvalMode,
    /// When set, the true tail occupies one of the `num_negatives` candidate
    /// slots instead of being appended to them, so `num_negatives` items are
    /// ranked rather than `num_negatives + 1`.
    pub include_true_in_pool: bool,
    /// Known true triples filtered out of the candidate list in
    /// [`EvalMode::FilteredFull`]; ignored in sampled mode.
    pub filter_known: Vec<Triple>,
}

impl EvalProtocol {
    /// Sampled-mode protocol with the reported defaults: 50 negatives,
    /// 5 trials.
    pub fn sampled(
        candidate_pool: Vec<EntityId>,
        relations: Vec<RelationId>,
        seed: u64,
    ) -> Self {
        EvalProtocol {
            candidate_pool,
            num_negatives: 50,
            relations,
            trials: 5,
            seed,
            mode: EvalMode::Sampled,
            include_true_in_pool: false,
            filter_known: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        if self.relations.is_empty() {
            return Err(EvalError::BadProtocol("relations must be non-empty".into()));
        }
        if self.candidate_pool.is_empty() {
            return Err(EvalError::BadProtocol("candidate pool is empty".into()));
        }
        if self.trials == 0 {
            return Err(EvalError::BadProtocol("trials must be >= 1".into()));
        }
        if self.num_negatives == 0 {
            return Err(EvalError::BadProtocol("num_negatives must be >= 1".into()));
        }
        if self.num_negatives > self.candidate_pool.len() - 1 {
            return Err(EvalError::BadProtocol(format!(
                "num_negatives = {} exceeds candidate pool size - 1 = {}",
                self.num_negatives,
                self.candidate_pool.len() - 1
            )));
        }
        Ok(())
    }
}

/// Rank of one true triple among its candidate corruptions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankResult {
    pub triple: Triple,
    /// 1-based; ties resolved to the midpoint of the optimistic and
    /// pessimistic ranks, rounded up.
    pub rank: usize,
    pub num_candidates: usize,
}

/// One trial's metrics (or the single deterministic pass in filtered-full
/// mode).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub trial: u32,
    pub mr: f64,
    pub mrr: f64,
    /// Keyed by N for N in {1, 3, 10}.
    pub hits: std::collections::BTreeMap<u32, f64>,
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mr: f64,
    pub mrr: f64,
    pub hits: std::collections::BTreeMap<u32, f64>,
    pub auc: f64,
    pub per_trial: Vec<TrialMetrics>,
    /// Sample standard deviation of each metric across trials (keys `mr`,
    /// `mrr`, `h1`, `h3`, `h10`, `auc`); zero with a single trial.
    pub trial_std: std::collections::BTreeMap<String, f64>,
    pub triples_evaluated: usize,
}

/// Sample the negative candidate tails for one test triple: uniform without
/// replacement from `pool`, always excluding the true tail. Draws
/// `num_negatives` tails, or `num_negatives - 1` when the truth is counted
/// as part of the pool.
pub fn draw_candidates(
    pool: &[EntityId],
    true_tail: EntityId,
    num_negatives: usize,
    include_true_in_pool: bool,
    rng: &mut ChaCha8Rng,
) -> Vec<EntityId> {
    let eligible: Vec<EntityId> = pool.iter().copied().filter(|&e| e != true_tail).collect();
    let draw = if include_true_in_pool {
        num_negatives - 1
    } else {
        num_negatives
    };
    assert!(
        draw <= eligible.len(),
        "cannot draw {draw} of {} eligible candidates",
        eligible.len()
    );
    rand::seq::index::sample(rng, eligible.len(), draw)
        .iter()
        .map(|i| eligible[i])
        .collect()
}

/// Score the true triple and all tail corruptions; rank = 1 + (strictly
/// better negatives) + ceil(ties / 2). `negatives` must not contain the
/// true tail.
pub fn rank_tail<T: Scalar>(
    params: &ModelParams<T>,
    triple: Triple,
    negatives: &[EntityId],
) -> RankResult {
    debug_assert!(
        !negatives.contains(&triple.tail),
        "true tail appears among the negatives"
    );
    let true_score = score(params, triple.head, triple.relation, triple.tail);
    let mut less = 0usize;
    let mut ties = 0usize;
    for &cand in negatives {
        let s = score(params, triple.head, triple.relation, cand);
        if s < true_score {
            less += 1;
        } else if s == true_score {
            ties += 1;
        }
    }
    RankResult {
        triple,
        rank: 1 + less + (ties + 1) / 2,
        num_candidates: negatives.len() + 1,
    }
}

/// Mean per-triple pairwise AUC: `(num_candidates - rank) / (num_candidates - 1)`.
pub fn auc_from_ranks(results: &[RankResult]) -> Result<f64, EvalError> {
    if results.is_empty() {
        return Err(EvalError::EmptyResults);
    }
    let mut total = 0.0;
    for r in results {
        if r.num_candidates < 2 {
            return Err(EvalError::DegenerateCandidates);
        }
        total += (r.num_candidates - r.rank) as f64 / (r.num_candidates - 1) as f64;
    }
    Ok(total / results.len() as f64)
}

fn trial_metrics(trial: u32, results: &[RankResult]) -> Result<TrialMetrics, EvalError> {
    if results.is_empty() {
        return Err(EvalError::EmptyResults);
    }
    let n = results.len() as f64;
    let mr = results.iter().map(|r| r.rank as f64).sum::<f64>() / n;
    let mrr = results.iter().map(|r| 1.0 / r.rank as f64).sum::<f64>() / n;
    let hits = HITS_NS
        .iter()
        .map(|&cut| {
            let frac =
                results.iter().filter(|r| r.rank <= cut as usize).count() as f64 / n;
            (cut, frac)
        })
        .collect();
    Ok(TrialMetrics {
        trial,
        mr,
        mrr,
        hits,
        auc: auc_from_ranks(results)?,
    })
}

fn mean_of_trials(per_trial: &[TrialMetrics], triples_evaluated: usize) -> MetricsReport {
    let n = per_trial.len() as f64;
    let mean = |f: &dyn Fn(&TrialMetrics) -> f64| per_trial.iter().map(|t| f(t)).sum::<f64>() / n;
    let std = |f: &dyn Fn(&TrialMetrics) -> f64| {
        if per_trial.len() < 2 {
            return 0.0;
        }
        let m = mean(f);
        (per_trial.iter().map(|t| (f(t) - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    let extractors: [(&str, &dyn Fn(&TrialMetrics) -> f64); 6] = [
        ("mr", &|t| t.mr),
        ("mrr", &|t| t.mrr),
        ("h1", &|t| t.hits[&1]),
        ("h3", &|t| t.hits[&3]),
        ("h10", &|t| t.hits[&10]),
        ("auc", &|t| t.auc),
    ];
    MetricsReport {
        mr: mean(&|t| t.mr),
        mrr: mean(&|t| t.mrr),
        hits: HITS_NS
            .iter()
            .map(|&cut| (cut, mean(&|t: &TrialMetrics| t.hits[&cut])))
            .collect(),
        auc: mean(&|t| t.auc),
        per_trial: per_trial.to_vec(),
        trial_std: extractors
            .iter()
            .map(|(name, f)| (name.to_string(), std(f)))
            .collect(),
        triples_evaluated,
    }
}

/// Run the full protocol over `test`. Sampled mode draws fresh candidates
/// per trial from per-trial RNG streams (stream index = trial number), so
/// trial `t` is reproducible independently of how many trials run.
pub fn evaluate<T: Scalar>(
    params: &ModelParams<T>,
    test: &TripleSet,
    protocol: &EvalProtocol,
) -> Result<MetricsReport, EvalError> {
    protocol.validate()?;
    let wanted: HashSet<RelationId> = protocol.relations.iter().copied().collect();
    let filtered: Vec<Triple> = test
        .triples()
        .iter()
        .filter(|t| wanted.contains(&t.relation))
        .copied()
        .collect();
    if filtered.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }

    let per_trial = match protocol.mode {
        EvalMode::Sampled => {
            let mut trials = Vec::with_capacity(protocol.trials as usize);
            for trial in 0..protocol.trials {
                let mut rng = ChaCha8Rng::seed_from_u64(protocol.seed);
                rng.set_stream(trial as u64);
                let results: Vec<RankResult> = filtered
                    .iter()
                    .map(|&t| {
                        let negatives = draw_candidates(
                            &protocol.candidate_pool,
                            t.tail,
                            protocol.num_negatives,
                            protocol.include_true_in_pool,
                            &mut rng,
                        );
                        rank_tail(params, t, &negatives)
                    })
                    .collect();
                trials.push(trial_metrics(trial, &results)?);
            }
            trials
        }
        EvalMode::FilteredFull => {
            let known: HashSet<Triple> = protocol.filter_known.iter().copied().collect();
            let results: Vec<RankResult> = filtered
                .iter()
                .map(|&t| {
                    let negatives: Vec<EntityId> = protocol
                        .candidate_pool
                        .iter()
                        .copied()
                        .filter(|&cand| {
                            cand != t.tail
                                && !known.contains(&Triple {
                                    head: t.head,
                                    relation: t.relation,
                                    tail: cand,
                                })
                        })
                        .collect();
                    rank_tail(params, t, &negatives)
                })
                .collect();
            // No sampling: one deterministic pass stands in for all trials.
            vec![trial_metrics(0, &results)?]
        }
    };

    Ok(mean_of_trials(&per_trial, filtered.len()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Table,
    Csv,
    Json,
}

/// Shortest representation that round-trips, padded to at least 3 decimal
/// places so tables and CSVs stay aligned (`1` -> `1.000`, `0.9` -> `0.900`,
/// long fractions keep every digit).
pub(crate) fn fmt_metric(v: f64) -> String {
    let shortest = format!("{v}");
    let decimals = shortest.split('.').nth(1).map_or(0, str::len);
    if decimals < 3 && !shortest.contains('e') {
        format!("{v:.3}")
    } else {
        shortest
    }
}

const COLUMNS: [&str; 6] = ["MR", "MRR", "H@1", "H@3", "H@10", "AUC"];

fn metric_values(report: &MetricsReport) -> [f64; 6] {
    [
        report.mr,
        report.mrr,
        report.hits[&1],
        report.hits[&3],
        report.hits[&10],
        report.auc,
    ]
}

/// Render one report in the requested format. Table mode prints 3 decimals;
/// csv and json keep full precision.
pub fn emit_report(report: &MetricsReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Table => render_comparison_table(&[("model".to_string(), report.clone())]),
        ReportFormat::Csv => {
            let header = COLUMNS.map(str::to_ascii_lowercase).join(",").replace("h@", "h");
            let row = metric_values(report).map(fmt_metric).join(",");
            format!("{header}\n{row}\n")
        }
        ReportFormat::Json => {
            serde_json::to_string_pretty(report).expect("metrics serialize") + "\n"
        }
    }
}

/// Aligned fixed-width table comparing several labeled reports, one row per
/// model, 3 decimals per metric.
pub fn render_comparison_table(rows: &[(String, MetricsReport)]) -> String {
    let label_width = rows
        .iter()
        .map(|(l, _)| l.len())
        .chain(["model".len()])
        .max()
        .unwrap_or(5);
    let mut out = format!("{:<label_width$}", "model");
    for c in COLUMNS {
        out.push_str(&format!("  {c:>8}"));
    }
    out.push('\n');
    for (label, report) in rows {
        out.push_str(&format!("{label:<label_width$}"));
        for v in metric_values(report) {
            out.push_str(&format!("  {:>8}", format!("{v:.3}")));
        }
        out.push('\n');
    }
    out
}
