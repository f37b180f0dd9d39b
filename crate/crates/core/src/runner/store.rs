//! On-disk run layout.
//!
//! ```text
//! runs/<run_id>/
//!   manifest.json corpus.jsonl gpl.jsonl
//!   ckpt_<step>/{embeddings.bin, reduced.bin, assignment.json, ctfidf.json,
//!                topics.json, labels.json, checkpoint.json}
//!   scores.json report.tsv trajectory.csv evolution.json classes.json trend.csv
//! ```
//!
//! Run-level inputs and checkpoint artifacts are write-once: writing the same
//! bytes again is a no-op, writing different bytes is an error. Reports are
//! derived from them and may be rewritten.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backends::{BackendConfig, EmbeddingCheckpoint, GenerationParams};
use crate::cluster::ClustererConfig;
use crate::error::{Error, Result};
use crate::reduce::ReducerConfig;
use crate::topics::RepresentationConfig;

pub const BACKEND_URL_ENV: &str = "AHAM_BACKEND_URL";
pub const DEFAULT_SEED: u64 = 42;

pub const MANIFEST: &str = "manifest.json";
pub const CORPUS: &str = "corpus.jsonl";
pub const GPL: &str = "gpl.jsonl";
pub const GPL_PARTIAL: &str = "gpl.partial.jsonl";
pub const SCORES: &str = "scores.json";
pub const REPORT: &str = "report.tsv";
pub const TRAJECTORY: &str = "trajectory.csv";
pub const EVOLUTION: &str = "evolution.json";
pub const CLASSES: &str = "classes.json";
pub const TREND: &str = "trend.csv";

pub const EMBEDDINGS: &str = "embeddings.bin";
pub const REDUCED: &str = "reduced.bin";
pub const ASSIGNMENT: &str = "assignment.json";
pub const CTFIDF: &str = "ctfidf.json";
pub const TOPICS: &str = "topics.json";
pub const LABELS: &str = "labels.json";
/// Written last; its presence marks a complete checkpoint.
pub const CHECKPOINT: &str = "checkpoint.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub corpus_path: PathBuf,
    pub backend: BackendConfig,
    pub reducer: ReducerConfig,
    pub clusterer: ClustererConfig,
    #[serde(default)]
    pub representation: RepresentationConfig,
    #[serde(default)]
    pub generation: GenerationParams,
    /// Topic prompt bundle; the built-in one when absent.
    #[serde(default)]
    pub prompt_bundle: Option<PathBuf>,
    /// Checkpoints known to the run, ascending by step.
    #[serde(default)]
    pub checkpoints: Vec<EmbeddingCheckpoint>,
    pub seed: u64,
    pub created_at: String,
}

impl RunManifest {
    /// Defaults everywhere, with the reducer seeded from [`DEFAULT_SEED`].
    pub fn new(run_id: impl Into<String>, corpus_path: impl Into<PathBuf>) -> Self {
        RunManifest {
            run_id: run_id.into(),
            corpus_path: corpus_path.into(),
            backend: BackendConfig::default(),
            reducer: ReducerConfig {
                seed: DEFAULT_SEED,
                ..Default::default()
            },
            clusterer: ClustererConfig::default(),
            representation: RepresentationConfig::default(),
            generation: GenerationParams::default(),
            prompt_bundle: None,
            checkpoints: Vec::new(),
            seed: DEFAULT_SEED,
            created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        }
    }

    /// Sets the run seed and the reducer seed together.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.reducer.seed = seed;
        self
    }

    /// `AHAM_BACKEND_URL` when set, else the manifest endpoint.
    pub fn effective_endpoint(&self) -> String {
        match std::env::var(BACKEND_URL_ENV) {
            Ok(url) if !url.trim().is_empty() => url.trim().to_string(),
            _ => self.backend.endpoint.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok_id = !self.run_id.is_empty()
            && self
                .run_id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
            && !self.run_id.starts_with('.');
        if !ok_id {
            return Err(Error::InvalidParameter(format!(
                "run id {:?} must be non-empty [A-Za-z0-9._-] not starting with '.'",
                self.run_id
            )));
        }
        self.reducer.validate()?;
        self.clusterer.validate()?;
        self.generation.validate()
    }

    /// Add `checkpoint` if no checkpoint with its step is listed. Returns
    /// whether the list changed.
    pub fn record_checkpoint(&mut self, checkpoint: &EmbeddingCheckpoint) -> bool {
        if self.checkpoints.iter().any(|c| c.step == checkpoint.step) {
            return false;
        }
        self.checkpoints.push(checkpoint.clone());
        self.checkpoints.sort_by_key(|c| c.step);
        true
    }
}

pub fn checkpoint_dir(step: u64) -> String {
    format!("ckpt_{step}")
}

#[derive(Debug, Clone)]
pub struct RunStore {
    dir: PathBuf,
}

impl RunStore {
    /// Store for `run_id` under `root`; nothing is created until written.
    pub fn new(root: impl AsRef<Path>, run_id: &str) -> Self {
        RunStore {
            dir: root.as_ref().join(run_id),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    pub fn checkpoint_path(&self, step: u64, name: &str) -> PathBuf {
        self.dir.join(checkpoint_dir(step)).join(name)
    }

    pub fn exists(&self, rel: &str) -> bool {
        self.path(rel).is_file()
    }

    fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    /// Write-once. Same bytes again is a no-op; different bytes is an error.
    pub fn put_once(&self, path: &Path, bytes: &[u8]) -> Result<()> {
        match fs::read(path) {
            Ok(existing) if existing == bytes => Ok(()),
            Ok(_) => Err(Error::Store(format!(
                "{} already exists with different content",
                path.display()
            ))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Self::write_atomic(path, bytes),
            Err(e) => Err(Error::io(path, e)),
        }
    }

    /// Overwrite a derived file.
    pub fn put(&self, path: &Path, bytes: &[u8]) -> Result<()> {
        Self::write_atomic(path, bytes)
    }

    pub fn read(&self, path: &Path) -> Result<Vec<u8>> {
        fs::read(path).map_err(|e| Error::io(path, e))
    }

    pub fn read_json<T: serde::de::DeserializeOwned>(&self, path: &Path) -> Result<T> {
        Ok(serde_json::from_slice(&self.read(path)?)?)
    }

    pub fn write_manifest(&self, manifest: &RunManifest) -> Result<()> {
        self.put(&self.path(MANIFEST), &to_json_bytes(manifest)?)
    }

    pub fn read_manifest(&self) -> Result<RunManifest> {
        let path = self.path(MANIFEST);
        if !path.is_file() {
            return Err(Error::Store(format!(
                "no run at {} (run `ingest` first)",
                self.dir.display()
            )));
        }
        self.read_json(&path)
    }

    /// Steps with a complete checkpoint directory, ascending.
    pub fn modeled_steps(&self) -> Result<Vec<u64>> {
        let entries = match fs::read_dir(&self.dir) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(Error::io(&self.dir, e)),
        };
        let mut steps = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(&self.dir, e))?;
            let name = entry.file_name();
            let Some(step) = name
                .to_str()
                .and_then(|n| n.strip_prefix("ckpt_"))
                .and_then(|s| s.parse::<u64>().ok())
            else {
                continue;
            };
            if self.checkpoint_path(step, CHECKPOINT).is_file() {
                steps.push(step);
            }
        }
        steps.sort_unstable();
        Ok(steps)
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn put_once_is_idempotent_and_append_only() {
        let tmp = tempfile::tempdir().unwrap();
        let store = RunStore::new(tmp.path(), "r");
        let p = store.checkpoint_path(0, ASSIGNMENT);
        store.put_once(&p, b"abc").unwrap();
        store.put_once(&p, b"abc").unwrap();
        assert!(matches!(store.put_once(&p, b"abd"), Err(Error::Store(_))));
        assert_eq!(store.read(&p).unwrap(), b"abc");
    }

    #[test]
    fn modeled_steps_need_the_completion_marker() {
        let tmp = tempfile::tempdir().unwrap();
        let store = RunStore::new(tmp.path(), "r");
        store
            .put(&store.checkpoint_path(20, CHECKPOINT), b"{}")
            .unwrap();
        store
            .put(&store.checkpoint_path(3, CHECKPOINT), b"{}")
            .unwrap();
        store
            .put(&store.checkpoint_path(7, ASSIGNMENT), b"{}")
            .unwrap();
        assert_eq!(store.modeled_steps().unwrap(), vec![3, 20]);
    }

    #[test]
    fn manifest_roundtrip_and_run_id_rules() {
        let m = RunManifest::new("demo-1", "c.jsonl").with_seed(7);
        assert_eq!(m.reducer.seed, 7);
        let back: RunManifest = serde_json::from_slice(&to_json_bytes(&m).unwrap()).unwrap();
        assert_eq!(back, m);
        assert!(m.validate().is_ok());
        assert!(RunManifest::new("../x", "c").validate().is_err());
        assert!(RunManifest::new("", "c").validate().is_err());
    }

    #[test]
    fn record_checkpoint_keeps_steps_sorted_and_unique() {
        let mut m = RunManifest::new("r", "c");
        assert!(m.record_checkpoint(&EmbeddingCheckpoint::new("b", 20, 4)));
        assert!(m.record_checkpoint(&EmbeddingCheckpoint::new("a", 0, 4)));
        assert!(!m.record_checkpoint(&EmbeddingCheckpoint::new("c", 20, 4)));
        let steps: Vec<u64> = m.checkpoints.iter().map(|c| c.step).collect();
        assert_eq!(steps, vec![0, 20]);
    }
}
