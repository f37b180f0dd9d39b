//! Generative pseudo-labeling training data: synthetic queries per passage,
//! one nucleus-sampled hard negative per query, and cross-encoder margins.
//!
//! Negatives are mined against base-checkpoint embeddings. Each query draws
//! from its own ChaCha stream (`seed`, stream = global query index), so the
//! dataset bytes depend only on the corpus, the backends and the seed.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backends::mock::PASSAGE_MARKER;
use crate::backends::{
    cross_encode_pairs, generate_text, CrossEncoderBackend, GenerationBackend, GenerationParams,
    Prompt, TextEmbedder,
};
use crate::corpus::Corpus;
use crate::error::{Error, Result};

pub const MAX_QUERY_TOKENS: usize = 64;
/// Slack when comparing cumulative probability mass against `nucleus_p`.
const MASS_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GplConfig {
    /// Generator calls per passage.
    pub q: usize,
    pub nucleus_p: f64,
    pub pool_size: usize,
    pub seed: u64,
}

impl Default for GplConfig {
    fn default() -> Self {
        GplConfig {
            q: 3,
            nucleus_p: 0.9,
            pool_size: 50,
            seed: 42,
        }
    }
}

impl GplConfig {
    pub fn validate(&self) -> Result<()> {
        if self.q == 0 {
            return Err(Error::InvalidParameter("q must be >= 1".into()));
        }
        if !(self.nucleus_p > 0.0 && self.nucleus_p <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "nucleus_p must be in (0, 1], got {}",
                self.nucleus_p
            )));
        }
        if self.pool_size == 0 {
            return Err(Error::InvalidParameter("pool_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Prompt for the `index`-th query of a passage. The passage is the last
/// line, after [`PASSAGE_MARKER`].
pub fn query_prompt(passage: &str, index: usize, q: usize) -> Prompt {
    Prompt::plain(format!(
        "Write one search query that the passage below answers. \
         This is query {} of {q}; make it differ from the others.\n{PASSAGE_MARKER} {passage}",
        index + 1
    ))
}

/// First non-empty line, whitespace-normalized, at most 64 tokens.
fn clean_query(raw: &str) -> Option<String> {
    let line = raw.lines().map(str::trim).find(|l| !l.is_empty())?;
    let words: Vec<&str> = line.split_whitespace().take(MAX_QUERY_TOKENS).collect();
    Some(words.join(" "))
}

/// Up to `q` queries for one passage. Empty generations are skipped; other
/// backend errors propagate.
pub fn queries_for_passage(
    passage: &str,
    q: usize,
    generator: &dyn GenerationBackend,
    params: &GenerationParams,
) -> Result<Vec<String>> {
    let mut out = Vec::with_capacity(q);
    for i in 0..q {
        match generate_text(generator, &query_prompt(passage, i, q), params) {
            Ok(raw) => out.extend(clean_query(&raw)),
            Err(Error::EmptyResponse) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Queries per document, in corpus order.
pub fn generate_queries(
    corpus: &Corpus,
    q: usize,
    generator: &dyn GenerationBackend,
    params: &GenerationParams,
) -> Result<Vec<(String, Vec<String>)>> {
    if q == 0 {
        return Err(Error::InvalidParameter("q must be >= 1".into()));
    }
    corpus
        .documents
        .iter()
        .map(|d| {
            let qs = queries_for_passage(&d.text, q, generator, params)?;
            if qs.is_empty() {
                log::warn!("document {}: no queries generated", d.id);
            }
            Ok((d.id.clone(), qs))
        })
        .collect()
}

fn cosine(a: ArrayView1<f32>, b: ArrayView1<f32>) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b.iter()) {
        let (x, y) = (f64::from(x), f64::from(y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na.sqrt() * nb.sqrt())
    }
}

/// Softmax of `scores` (already in descending order) cut to the smallest
/// prefix holding at least `nucleus_p` of the mass.
pub fn nucleus(scores: &[f64], nucleus_p: f64) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = exp.iter().sum();
    let mut kept = Vec::new();
    let mut mass = 0.0;
    for e in exp {
        let p = e / z;
        kept.push(p);
        mass += p;
        if mass >= nucleus_p - MASS_TOLERANCE {
            break;
        }
    }
    kept
}

/// Draw an index from unnormalized `weights`.
fn sample(weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

/// Hard negative for one query: the top `pool_size` documents by cosine to
/// the query (positive excluded, ties to the lower index), softmax over their
/// similarities, nucleus cut, one draw.
pub fn mine_negative(
    query: ArrayView1<f32>,
    positive: usize,
    base_embeddings: &Array2<f32>,
    nucleus_p: f64,
    pool_size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<usize> {
    let n = base_embeddings.nrows();
    if n < 2 {
        return Err(Error::InsufficientData {
            needed: 1,
            actual: n,
        });
    }
    if pool_size == 0 {
        return Err(Error::InvalidParameter("pool_size must be >= 1".into()));
    }
    let mut pool: Vec<(f64, usize)> = (0..n)
        .filter(|&i| i != positive)
        .map(|i| (cosine(query, base_embeddings.row(i)), i))
        .collect();
    pool.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    pool.truncate(pool_size);
    let scores: Vec<f64> = pool.iter().map(|p| p.0).collect();
    let probs = nucleus(&scores, nucleus_p);
    Ok(pool[sample(&probs, rng)].1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GplTriplet {
    pub query: String,
    #[serde(rename = "pos")]
    pub positive_id: String,
    #[serde(rename = "neg")]
    pub negative_id: String,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GplHeader {
    pub seed: u64,
    pub q: usize,
    pub nucleus_p: f64,
    pub pool_size: usize,
    /// Content id of the target corpus.
    pub corpus_id: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GplDataset {
    pub header: GplHeader,
    pub triplets: Vec<GplTriplet>,
}

impl GplDataset {
    /// Header line, then one triplet per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        for t in &self.triplets {
            out.push_str(&serde_json::to_string(t).expect("triplet serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(body: &str) -> Result<Self> {
        let mut lines = body
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, head) = lines.next().ok_or(Error::MalformedRecord {
            line: 1,
            reason: "missing header".into(),
        })?;
        let header: GplHeader = serde_json::from_str(head).map_err(|e| Error::MalformedRecord {
            line: 1,
            reason: e.to_string(),
        })?;
        let triplets = lines
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| Error::MalformedRecord {
                    line: i + 1,
                    reason: e.to_string(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(GplDataset { header, triplets })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_jsonl().as_bytes())
            .map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_jsonl(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    /// Re-score every triplet and check the stored margins and that no
    /// negative equals its positive.
    pub fn verify(&self, corpus: &Corpus, cross_encoder: &dyn CrossEncoderBackend) -> Result<()> {
        let index = corpus.index();
        let text = |id: &str| -> Result<&str> {
            index
                .get(id)
                .map(|&i| corpus.documents[i].text.as_str())
                .ok_or_else(|| Error::CorpusMismatch(format!("unknown document {id:?}")))
        };
        for (k, t) in self.triplets.iter().enumerate() {
            if t.positive_id == t.negative_id {
                return Err(Error::InvalidParameter(format!(
                    "triplet {k}: negative equals positive {:?}",
                    t.positive_id
                )));
            }
            let m = compute_margin(
                &t.query,
                text(&t.positive_id)?,
                text(&t.negative_id)?,
                cross_encoder,
            )?;
            if m != t.margin {
                return Err(Error::InvalidParameter(format!(
                    "triplet {k}: stored margin {} but cross-encoder gives {m}",
                    t.margin
                )));
            }
        }
        Ok(())
    }
}

/// `CE(query, positive) - CE(query, negative)`, unclamped.
pub fn compute_margin(
    query: &str,
    positive: &str,
    negative: &str,
    cross_encoder: &dyn CrossEncoderBackend,
) -> Result<f64> {
    let s = cross_encode_pairs(
        cross_encoder,
        &[
            (query.to_string(), positive.to_string()),
            (query.to_string(), negative.to_string()),
        ],
    )?;
    Ok(s[0] - s[1])
}

/// The three backends a GPL build talks to. `base` embeds with the step-0
/// checkpoint.
pub struct GplBackends<'a> {
    pub generator: &'a dyn GenerationBackend,
    pub base: &'a dyn TextEmbedder,
    pub cross_encoder: &'a dyn CrossEncoderBackend,
    pub params: GenerationParams,
}

/// One triplet per generated query. When a backend call fails after some
/// triplets were built and `partial_path` is set, the triplets so far are
/// written there before the error is returned.
pub fn build_gpl_dataset(
    corpus: &Corpus,
    config: &GplConfig,
    backends: &GplBackends<'_>,
    partial_path: Option<&Path>,
) -> Result<GplDataset> {
    config.validate()?;
    if corpus.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 1,
            actual: corpus.len(),
        });
    }
    let mut dataset = GplDataset {
        header: GplHeader {
            seed: config.seed,
            q: config.q,
            nucleus_p: config.nucleus_p,
            pool_size: config.pool_size,
            corpus_id: corpus.content_id(),
        },
        triplets: Vec::new(),
    };
    let base_embeddings = backends.base.embed_texts(&corpus.texts())?;
    let mut query_index = 0u64;
    for (pos, doc) in corpus.documents.iter().enumerate() {
        let step = || -> Result<Vec<GplTriplet>> {
            let queries =
                queries_for_passage(&doc.text, config.q, backends.generator, &backends.params)?;
            if queries.is_empty() {
                log::warn!("document {}: no queries generated", doc.id);
                return Ok(Vec::new());
            }
            let qemb = backends.base.embed_texts(&queries)?;
            let mut negatives = Vec::with_capacity(queries.len());
            for (k, _) in queries.iter().enumerate() {
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                rng.set_stream(query_index + k as u64);
                negatives.push(mine_negative(
                    qemb.row(k),
                    pos,
                    &base_embeddings,
                    config.nucleus_p,
                    config.pool_size,
                    &mut rng,
                )?);
            }
            let pairs: Vec<(String, String)> = queries
                .iter()
                .zip(&negatives)
                .flat_map(|(q, &neg)| {
                    [
                        (q.clone(), doc.text.clone()),
                        (q.clone(), corpus.documents[neg].text.clone()),
                    ]
                })
                .collect();
            let scores = cross_encode_pairs(backends.cross_encoder, &pairs)?;
            Ok(queries
                .into_iter()
                .zip(negatives)
                .enumerate()
                .map(|(k, (query, neg))| GplTriplet {
                    query,
                    positive_id: doc.id.clone(),
                    negative_id: corpus.documents[neg].id.clone(),
                    margin: scores[2 * k] - scores[2 * k + 1],
                })
                .collect())
        };
        match step() {
            Ok(ts) => {
                query_index += ts.len() as u64;
                dataset.triplets.extend(ts);
            }
            Err(e) => {
                if let Some(p) = partial_path {
                    dataset.write(p)?;
                    log::error!(
                        "GPL build stopped at document {}; {} triplets saved to {}",
                        doc.id,
                        dataset.triplets.len(),
                        p.display()
                    );
                }
                return Err(e);
            }
        }
    }
    Ok(dataset)
}
