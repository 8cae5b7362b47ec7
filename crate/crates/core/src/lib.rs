//! Knowledge-graph embedding with LLM-derived textual anchors, aimed at
//! drug-repurposing link prediction.
//!
//! The toolkit covers the full pipeline:
//!
//! 1. [`kg`] — load, validate, index, and split (head, relation, tail) triple
//!    files, with type pools extracted from `Type::Source:ID` labels.
//! 2. [`enrich`] — generate per-entity descriptions through a chat-completion
//!    endpoint, embed names and descriptions through a text-embedding
//!    endpoint, and assemble concatenated/sliced anchor vectors.
//! 3. [`kge`] — TransE / DistMult / RotatE score functions with analytic
//!    gradients over dense embedding tables, text-anchored or random init.
//! 4. [`train`] — mini-batch optimization of
//!    `L = zeta1 * L_anc + zeta2 * L_link`: a semantic anchoring pull toward
//!    the text vectors plus a logistic-margin link-prediction loss with
//!    uniform negative sampling.
//! 5. [`eval`] — tail-replacement ranking against sampled disease candidates
//!    over treatment relations; MR / MRR / Hits@N / AUC across repeated
//!    trials.
//! 6. [`perturb`] — controlled triple deletion/addition noise and the
//!    robustness grid driver.
//!
//! All randomized operations take explicit seeds and are bitwise
//! deterministic in single-threaded mode.

pub mod enrich;
pub mod eval;
pub mod kg;
pub mod kge;
pub mod matrix;
pub mod perturb;
pub mod synth;
pub mod train;
pub mod vecio;

pub use matrix::{Matrix, Scalar};
