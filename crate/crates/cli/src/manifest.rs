//! Run manifests: one JSON record per invocation capturing seeds, input and
//! output digests, and the outcome. The manifest is written exactly once,
//! after the command finishes — also when it fails — so every artifact on
//! disk can be traced back to the run that produced it.

use std::collections::BTreeMap;
use std::io::{self, Read};
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::commands::Failure;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub toolkit_version: String,
    pub started_at: String,
    pub finished_at: String,
    /// `ok`, or the failure message.
    pub status: String,
    pub exit_code: i32,
    /// Content hash of the resolved training configuration, when one exists.
    pub config_hash: Option<String>,
    /// Every seed the run consumed, by role.
    pub seeds: BTreeMap<String, u64>,
    /// SHA-256 per input file, keyed by path as passed.
    pub input_digests: BTreeMap<String, String>,
    /// SHA-256 per artifact this run wrote.
    pub output_digests: BTreeMap<String, String>,
}

/// Accumulates manifest fields while a command runs; [`finish`] stamps the
/// outcome and writes the file.
///
/// [`finish`]: ManifestBuilder::finish
pub struct ManifestBuilder {
    path: PathBuf,
    manifest: RunManifest,
    /// Digested lazily at finish time, once the artifacts exist.
    outputs: Vec<PathBuf>,
}

impl ManifestBuilder {
    pub fn new(command: &str, path: PathBuf) -> Self {
        ManifestBuilder {
            path,
            manifest: RunManifest {
                command: command.to_string(),
                toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
                started_at: Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true),
                finished_at: String::new(),
                status: "running".to_string(),
                exit_code: -1,
                config_hash: None,
                seeds: BTreeMap::new(),
                input_digests: BTreeMap::new(),
                output_digests: BTreeMap::new(),
            },
            outputs: Vec::new(),
        }
    }

    pub fn seed(&mut self, role: &str, value: u64) {
        self.manifest.seeds.insert(role.to_string(), value);
    }

    pub fn config_hash(&mut self, hash: impl Into<String>) {
        self.manifest.config_hash = Some(hash.into());
    }

    /// Digest an input file now, before the command reads it.
    pub fn input(&mut self, path: &Path) -> Result<(), Failure> {
        let digest = sha256_file(path)
            .map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))?;
        self.manifest
            .input_digests
            .insert(path.display().to_string(), digest);
        Ok(())
    }

    /// Register an artifact path; it is digested when the run finishes, so
    /// outputs that were never written (failed runs) are simply absent.
    pub fn output(&mut self, path: impl Into<PathBuf>) {
        self.outputs.push(path.into());
    }

    pub fn finish(mut self, result: &Result<(), Failure>) -> io::Result<()> {
        for path in std::mem::take(&mut self.outputs) {
            if let Ok(digest) = sha256_file(&path) {
                self.manifest
                    .output_digests
                    .insert(path.display().to_string(), digest);
            }
        }
        self.manifest.finished_at = Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true);
        match result {
            Ok(()) => {
                self.manifest.status = "ok".to_string();
                self.manifest.exit_code = 0;
            }
            Err(f) => {
                self.manifest.status = f.message.clone();
                self.manifest.exit_code = f.code;
            }
        }
        let mut body = serde_json::to_string_pretty(&self.manifest)?;
        body.push('\n');
        write_atomic(&self.path, body.as_bytes())
    }
}

pub fn sha256_file(path: &Path) -> io::Result<String> {
    let mut file = std::fs::File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 65536];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Write via a sibling temp file and rename, creating parent directories.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let tmp = path_with_suffix(path, ".tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}

/// `path` with `suffix` appended to the full file name
/// (`x.kgev` + `.labels` = `x.kgev.labels`).
pub fn path_with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(suffix);
    PathBuf::from(os)
}
