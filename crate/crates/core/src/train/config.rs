//! Training configuration, loadable from a TOML document whose keys mirror
//! the struct field names.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::TrainError;

/// Distance used by the semantic anchoring term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorDistance {
    /// Mean over batch entities of the squared L2 distance to the anchor.
    SquaredL2,
    /// Mean of (1 - cosine similarity); zero-norm vectors are excluded.
    Cosine,
    /// Mean KL(softmax(anchor) || softmax(embedding)).
    Kl,
}

impl fmt::Display for AnchorDistance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            AnchorDistance::SquaredL2 => "squared_l2",
            AnchorDistance::Cosine => "cosine",
            AnchorDistance::Kl => "kl",
        };
        f.write_str(s)
    }
}

impl FromStr for AnchorDistance {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "squared_l2" | "squared-l2" | "l2" => Ok(AnchorDistance::SquaredL2),
            "cosine" => Ok(AnchorDistance::Cosine),
            "kl" => Ok(AnchorDistance::Kl),
            other => Err(format!(
                "unknown anchor distance `{other}` (expected squared_l2, cosine, or kl)"
            )),
        }
    }
}

/// Which slot negative sampling corrupts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorruptionSide {
    Tail,
    Head,
    /// Alternate tail/head by the positive's index within its batch.
    Both,
}

impl fmt::Display for CorruptionSide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CorruptionSide::Tail => "tail",
            CorruptionSide::Head => "head",
            CorruptionSide::Both => "both",
        };
        f.write_str(s)
    }
}

impl FromStr for CorruptionSide {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "tail" => Ok(CorruptionSide::Tail),
            "head" => Ok(CorruptionSide::Head),
            "both" => Ok(CorruptionSide::Both),
            other => Err(format!(
                "unknown corruption side `{other}` (expected tail, head, or both)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    /// Per-row scalar accumulator Adagrad (the sparse-embedding convention).
    Adagrad,
    Sgd,
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            OptimizerKind::Adagrad => "adagrad",
            OptimizerKind::Sgd => "sgd",
        };
        f.write_str(s)
    }
}

impl FromStr for OptimizerKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "adagrad" => Ok(OptimizerKind::Adagrad),
            "sgd" => Ok(OptimizerKind::Sgd),
            other => Err(format!("unknown optimizer `{other}` (expected adagrad or sgd)")),
        }
    }
}

/// All knobs of one training run. TOML keys == field names; fields past
/// `seed` have defaults and may be omitted from the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Weight of the anchor (semantic) loss.
    pub zeta1: f64,
    /// Weight of the link-prediction loss.
    pub zeta2: f64,
    /// Margin separating positive from negative scores.
    pub gamma: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Negatives drawn per positive triple.
    pub neg_per_pos: usize,
    pub steps: u64,
    pub anchor_distance: AnchorDistance,
    pub corruption_side: CorruptionSide,
    pub optimizer: OptimizerKind,
    pub seed: u64,

    /// Entity embedding dimension.
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// Emit a training-log row every this many steps.
    #[serde(default = "default_log_every")]
    pub log_every: u64,
    /// Write an intermediate checkpoint every this many steps; 0 = final only.
    #[serde(default)]
    pub checkpoint_every: u64,
    /// Reject negative corruptions that exist in the training set.
    #[serde(default)]
    pub filter_negatives: bool,
    /// Worker threads; 1 = the deterministic contract, >1 = lock-free racy
    /// updates (non-deterministic).
    #[serde(default = "default_threads")]
    pub threads: usize,
}

fn default_dim() -> usize {
    400
}
fn default_log_every() -> u64 {
    100
}
fn default_threads() -> usize {
    1
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            zeta1: 1.0,
            zeta2: 1.0,
            gamma: 12.0,
            learning_rate: 0.1,
            batch_size: 1024,
            neg_per_pos: 64,
            steps: 100_000,
            anchor_distance: AnchorDistance::SquaredL2,
            corruption_side: CorruptionSide::Both,
            optimizer: OptimizerKind::Adagrad,
            seed: 0,
            dim: default_dim(),
            log_every: default_log_every(),
            checkpoint_every: 0,
            filter_negatives: false,
            threads: default_threads(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let check = |ok: bool, what: &str| -> Result<(), TrainError> {
            if ok {
                Ok(())
            } else {
                Err(TrainError::BadConfig(what.to_string()))
            }
        };
        check(self.zeta1.is_finite() && self.zeta1 >= 0.0, "zeta1 must be >= 0")?;
        check(self.zeta2.is_finite() && self.zeta2 >= 0.0, "zeta2 must be >= 0")?;
        check(self.gamma.is_finite() && self.gamma > 0.0, "gamma must be > 0")?;
        check(
            self.learning_rate.is_finite() && self.learning_rate >= 0.0,
            "learning_rate must be >= 0",
        )?;
        check(self.batch_size >= 1, "batch_size must be >= 1")?;
        check(self.neg_per_pos >= 1, "neg_per_pos must be >= 1")?;
        check(self.dim >= 1, "dim must be >= 1")?;
        check(self.threads >= 1, "threads must be >= 1")?;
        check(self.log_every >= 1, "log_every must be >= 1")?;
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self, TrainError> {
        let config: TrainConfig =
            toml::from_str(text).map_err(|e| TrainError::BadConfig(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("TrainConfig serializes")
    }

    /// SHA-256 of the canonical TOML rendering; recorded in checkpoints and
    /// run manifests.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml_string().as_bytes()))
    }
}
