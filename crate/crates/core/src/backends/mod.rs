//! Model capabilities behind one interface: embed, generate, cross-encode.
//!
//! Every engine module talks to the traits in this module. Concrete
//! implementations are the HTTP client in [`http`] and the deterministic
//! in-process mocks in [`mock`]. [`EmbeddingClient`] adds validation, L2
//! normalization, batching and caching on top of any [`EmbeddingBackend`].

pub mod cache;
pub mod http;
pub mod mock;
pub mod registry;
pub mod wire;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text;
pub use cache::{cache_key, VectorCache};
pub use registry::{list_checkpoints, CheckpointRegistry};

/// A named embedding model snapshot taken after `step` adaptation steps.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EmbeddingCheckpoint {
    #[serde(rename = "id")]
    pub checkpoint_id: String,
    pub step: u64,
    pub dim: usize,
}

impl EmbeddingCheckpoint {
    pub fn new(id: impl Into<String>, step: u64, dim: usize) -> Self {
        EmbeddingCheckpoint {
            checkpoint_id: id.into(),
            step,
            dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub endpoint: String,
    pub cache_dir: Option<PathBuf>,
    #[serde(with = "duration_secs")]
    pub timeout: Duration,
    pub batch_size: usize,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            endpoint: "http://127.0.0.1:8000".into(),
            cache_dir: None,
            timeout: Duration::from_secs(120),
            batch_size: 64,
        }
    }
}

mod duration_secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let secs = f64::deserialize(d)?;
        Duration::try_from_secs_f64(secs).map_err(serde::de::Error::custom)
    }
}

pub trait EmbeddingBackend: Send + Sync {
    /// Raw vectors, one per text. Need not be normalized.
    fn embed(&self, texts: &[String], checkpoint: &EmbeddingCheckpoint) -> Result<Vec<Vec<f32>>>;
}

pub trait CheckpointSource: Send + Sync {
    fn list_checkpoints(&self) -> Result<Vec<EmbeddingCheckpoint>>;
}

pub trait GenerationBackend: Send + Sync {
    fn generate(&self, prompt: &Prompt, params: &GenerationParams) -> Result<String>;
}

pub trait CrossEncoderBackend: Send + Sync {
    fn cross_encode(&self, pairs: &[(String, String)]) -> Result<Vec<f64>>;
}

/// A prompt split into the turns a chat model would receive.
///
/// `one_shot` holds a worked example whose final line, when it starts with
/// [`ONE_SHOT_COMPLETION_MARKER`], is the expected completion.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Prompt {
    pub system: String,
    pub one_shot: String,
    pub query: String,
}

pub const ONE_SHOT_COMPLETION_MARKER: &str = "[INST]:";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Prompt {
    pub fn plain(query: impl Into<String>) -> Self {
        Prompt {
            query: query.into(),
            ..Default::default()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.system.trim().is_empty()
            && self.one_shot.trim().is_empty()
            && self.query.trim().is_empty()
    }

    /// Concatenation for backends without chat framing.
    pub fn to_plain_text(&self) -> String {
        [&self.system, &self.one_shot, &self.query]
            .into_iter()
            .filter(|s| !s.trim().is_empty())
            .map(String::as_str)
            .collect::<Vec<_>>()
            .join("\n\n")
    }

    /// System turn, one-shot user/assistant exchange, then the query.
    pub fn chat_turns(&self) -> Vec<(Role, String)> {
        let mut turns = Vec::new();
        if !self.system.trim().is_empty() {
            turns.push((Role::System, self.system.clone()));
        }
        if !self.one_shot.trim().is_empty() {
            let (user, completion) = split_one_shot(&self.one_shot);
            turns.push((Role::User, user.to_string()));
            if let Some(c) = completion {
                turns.push((Role::Assistant, c.to_string()));
            }
        }
        turns.push((Role::User, self.query.clone()));
        turns
    }
}

/// Split a one-shot example into (example, expected completion).
pub fn split_one_shot(one_shot: &str) -> (&str, Option<&str>) {
    match one_shot.rfind(ONE_SHOT_COMPLETION_MARKER) {
        Some(pos) => (
            one_shot[..pos].trim_end(),
            Some(one_shot[pos + ONE_SHOT_COMPLETION_MARKER.len()..].trim()),
        ),
        None => (one_shot, None),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub temperature: f64,
    pub max_new_tokens: usize,
    pub repetition_penalty: f64,
}

impl Default for GenerationParams {
    /// Greedy decoding, a 500-token budget and a 1.1 repetition penalty.
    fn default() -> Self {
        GenerationParams {
            temperature: 0.0,
            max_new_tokens: 500,
            repetition_penalty: 1.1,
        }
    }
}

impl GenerationParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature >= 0.0) || !self.temperature.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        if self.max_new_tokens == 0 {
            return Err(Error::InvalidParameter(
                "max_new_tokens must be >= 1".into(),
            ));
        }
        if !(self.repetition_penalty > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "repetition_penalty must be > 0, got {}",
                self.repetition_penalty
            )));
        }
        Ok(())
    }
}

/// Validated generation call. An empty (whitespace-only) response is an error.
pub fn generate_text(
    backend: &dyn GenerationBackend,
    prompt: &Prompt,
    params: &GenerationParams,
) -> Result<String> {
    params.validate()?;
    if prompt.is_empty() {
        return Err(Error::InvalidParameter("empty prompt".into()));
    }
    let out = backend.generate(prompt, params)?;
    if out.trim().is_empty() {
        return Err(Error::EmptyResponse);
    }
    Ok(out)
}

/// One score per pair, in input order.
pub fn cross_encode_pairs(
    backend: &dyn CrossEncoderBackend,
    pairs: &[(String, String)],
) -> Result<Vec<f64>> {
    if pairs.is_empty() {
        return Err(Error::InvalidParameter("no pairs to score".into()));
    }
    let scores = backend.cross_encode(pairs)?;
    if scores.len() != pairs.len() {
        return Err(Error::Backend(format!(
            "cross-encoder returned {} scores for {} pairs",
            scores.len(),
            pairs.len()
        )));
    }
    Ok(scores)
}

/// Embedding front end: registry check, cache, batching, unit normalization.
pub struct EmbeddingClient {
    backend: Arc<dyn EmbeddingBackend>,
    registry: CheckpointRegistry,
    cache: VectorCache,
    batch_size: usize,
}

const EMBED_CAPABILITY: &str = "embed";

impl EmbeddingClient {
    pub fn new(
        backend: Arc<dyn EmbeddingBackend>,
        registry: CheckpointRegistry,
        cache: VectorCache,
        batch_size: usize,
    ) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::InvalidParameter("batch_size must be >= 1".into()));
        }
        Ok(EmbeddingClient {
            backend,
            registry,
            cache,
            batch_size,
        })
    }

    pub fn registry(&self) -> &CheckpointRegistry {
        &self.registry
    }

    /// `|texts| × dim` matrix with unit-norm rows; row `i` embeds `texts[i]`.
    pub fn embed_batch(
        &self,
        texts: &[String],
        checkpoint: &EmbeddingCheckpoint,
    ) -> Result<Array2<f32>> {
        if texts.is_empty() {
            return Err(Error::InvalidParameter("no texts to embed".into()));
        }
        self.registry.check(checkpoint)?;
        let dim = checkpoint.dim;

        let normalized: Vec<String> = texts.iter().map(|t| text::normalize(t)).collect();
        if let Some(i) = normalized.iter().position(String::is_empty) {
            return Err(Error::InvalidParameter(format!("text {i} is empty")));
        }
        let keys: Vec<String> = normalized
            .iter()
            .map(|t| cache_key(EMBED_CAPABILITY, &checkpoint.checkpoint_id, t))
            .collect();

        let mut found: HashMap<&str, Arc<Vec<f32>>> = HashMap::new();
        let mut missing: Vec<usize> = Vec::new();
        for (i, key) in keys.iter().enumerate() {
            if found.contains_key(key.as_str()) || missing.iter().any(|&j| keys[j] == *key) {
                continue;
            }
            match self.cache.get(key) {
                Some(v) if v.len() == dim => {
                    found.insert(key, v);
                }
                _ => missing.push(i),
            }
        }

        for chunk in missing.chunks(self.batch_size) {
            let batch: Vec<String> = chunk.iter().map(|&i| normalized[i].clone()).collect();
            let raw = self.backend.embed(&batch, checkpoint)?;
            if raw.len() != batch.len() {
                return Err(Error::Backend(format!(
                    "embedder returned {} vectors for {} texts",
                    raw.len(),
                    batch.len()
                )));
            }
            for (&i, v) in chunk.iter().zip(raw) {
                if v.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        actual: v.len(),
                    });
                }
                let unit = l2_normalize(&v).ok_or_else(|| {
                    Error::Backend(format!("zero or non-finite embedding for text {i}"))
                })?;
                let stored = self.cache.put(&keys[i], unit)?;
                found.insert(&keys[i], stored);
            }
        }

        let mut out = Array2::<f32>::zeros((texts.len(), dim));
        for (i, key) in keys.iter().enumerate() {
            let v = &found[key.as_str()];
            out.row_mut(i)
                .iter_mut()
                .zip(v.iter())
                .for_each(|(o, x)| *o = *x);
        }
        Ok(out)
    }

    pub fn at<'a>(&'a self, checkpoint: &'a EmbeddingCheckpoint) -> CheckpointEmbedder<'a> {
        CheckpointEmbedder {
            client: self,
            checkpoint,
        }
    }
}

fn l2_normalize(v: &[f32]) -> Option<Vec<f32>> {
    let norm = v
        .iter()
        .map(|&x| f64::from(x) * f64::from(x))
        .sum::<f64>()
        .sqrt();
    if !(norm.is_finite() && norm > 0.0) {
        return None;
    }
    Some(v.iter().map(|&x| (f64::from(x) / norm) as f32).collect())
}

/// Anything that turns texts into unit-norm row vectors.
pub trait TextEmbedder {
    fn embed_texts(&self, texts: &[String]) -> Result<Array2<f32>>;
}

/// An [`EmbeddingClient`] bound to one checkpoint.
pub struct CheckpointEmbedder<'a> {
    client: &'a EmbeddingClient,
    checkpoint: &'a EmbeddingCheckpoint,
}

impl CheckpointEmbedder<'_> {
    pub fn checkpoint(&self) -> &EmbeddingCheckpoint {
        self.checkpoint
    }
}

impl TextEmbedder for CheckpointEmbedder<'_> {
    fn embed_texts(&self, texts: &[String]) -> Result<Array2<f32>> {
        self.client.embed_batch(texts, self.checkpoint)
    }
}
