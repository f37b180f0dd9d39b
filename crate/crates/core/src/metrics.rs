//! Topic-label similarity, the AHAM objective and checkpoint selection.
//!
//! The objective of a checkpoint is `(O / T) * mean pairwise label
//! similarity`, where `T` counts non-outlier topics and `O` outlier
//! documents. Lower is better. Models with fewer than two topics are
//! degenerate: their objective is `+inf` (stored as JSON `null`) and they
//! never win selection.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::backends::{EmbeddingCheckpoint, TextEmbedder};
use crate::cluster::Assignment;
use crate::error::{Error, Result};
use crate::text;

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
pub enum Metric {
    #[serde(rename = "lev")]
    Levenshtein,
    #[serde(rename = "bert")]
    GreedySemantic,
    #[default]
    #[serde(rename = "cos")]
    LabelCosine,
}

impl Metric {
    pub const ALL: [Metric; 3] = [
        Metric::Levenshtein,
        Metric::GreedySemantic,
        Metric::LabelCosine,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Levenshtein => "lev",
            Metric::GreedySemantic => "bert",
            Metric::LabelCosine => "cos",
        }
    }

    /// Whether the metric needs an embedding backend.
    pub fn needs_embeddings(self) -> bool {
        self != Metric::Levenshtein
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lev" | "levenshtein" => Ok(Metric::Levenshtein),
            "bert" | "bert_like" | "greedy" => Ok(Metric::GreedySemantic),
            "cos" | "cosine" => Ok(Metric::LabelCosine),
            other => Err(Error::InvalidParameter(format!("unknown metric {other:?}"))),
        }
    }
}

/// `1 - edit_distance / max_len` over lowercased characters; 1 for two
/// empty strings.
pub fn levenshtein_similarity(a: &str, b: &str) -> f64 {
    strsim::normalized_levenshtein(&a.to_lowercase(), &b.to_lowercase())
}

fn unit_rows(m: &Array2<f32>) -> Array2<f64> {
    let mut out = m.mapv(f64::from);
    for mut row in out.rows_mut() {
        let norm = row.dot(&row).sqrt();
        if norm > 0.0 {
            row.mapv_inplace(|v| v / norm);
        }
    }
    out
}

fn dot(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn label_tokens(label: &str) -> Result<Vec<String>> {
    let toks = text::word_tokens(label);
    if toks.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "label {label:?} has no word tokens"
        )));
    }
    Ok(toks)
}

/// Both directions of the greedy token-matching score and their mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreedyScore {
    pub forward: f64,
    pub backward: f64,
    pub score: f64,
}

/// Mean over rows of `a` of the best cosine against any row of `b`. Rows must
/// be unit norm.
fn directional(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let total: f64 = a
        .rows()
        .into_iter()
        .map(|r| {
            b.rows()
                .into_iter()
                .map(|s| dot(r, s))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .sum();
    total / a.nrows() as f64
}

/// Greedy token matching: each word token of `a` is paired with its most
/// similar token of `b` and the cosines are averaged, then the two directions
/// are averaged.
pub fn greedy_semantic(a: &str, b: &str, embedder: &dyn TextEmbedder) -> Result<GreedyScore> {
    let (ta, tb) = (label_tokens(a)?, label_tokens(b)?);
    let ea = unit_rows(&embedder.embed_texts(&ta)?);
    let eb = unit_rows(&embedder.embed_texts(&tb)?);
    Ok(greedy_from_rows(&ea, &eb))
}

fn greedy_from_rows(ea: &Array2<f64>, eb: &Array2<f64>) -> GreedyScore {
    let forward = directional(ea, eb);
    let backward = directional(eb, ea);
    GreedyScore {
        forward,
        backward,
        score: 0.5 * (forward + backward),
    }
}

pub fn greedy_semantic_score(a: &str, b: &str, embedder: &dyn TextEmbedder) -> Result<f64> {
    Ok(greedy_semantic(a, b, embedder)?.score)
}

/// Cosine of the whole-label embeddings.
pub fn label_cosine_similarity(a: &str, b: &str, embedder: &dyn TextEmbedder) -> Result<f64> {
    if a.trim().is_empty() || b.trim().is_empty() {
        return Err(Error::EmptyLabel);
    }
    let e = unit_rows(&embedder.embed_texts(&[a.to_string(), b.to_string()])?);
    Ok(dot(e.row(0), e.row(1)))
}

/// Symmetric `T x T` matrix of label similarities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub metric: Metric,
    pub labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
    /// Mean forward and backward directional scores over unordered pairs,
    /// greedy metric only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directional: Option<(f64, f64)>,
}

impl SimilarityMatrix {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Mean over unordered pairs.
    pub fn mean_pairwise(&self) -> Result<f64> {
        mean_pairwise_by(self.len(), |i, j| self.values[i][j])
    }
}

/// `2 * sum_{i<j} sim(i, j) / (T (T - 1))`.
pub fn mean_pairwise_by(t: usize, sim: impl Fn(usize, usize) -> f64) -> Result<f64> {
    if t < 2 {
        return Err(Error::Degenerate(format!(
            "mean pairwise similarity needs at least 2 labels, got {t}"
        )));
    }
    let mut total = 0.0;
    for i in 0..t {
        for j in i + 1..t {
            total += sim(i, j);
        }
    }
    Ok(2.0 * total / (t * (t - 1)) as f64)
}

/// All pairwise similarities under `metric`. Embeddings are fetched once per
/// distinct label (cosine) or token (greedy). `embedder` may be `None` for
/// Levenshtein.
pub fn similarity_matrix(
    labels: &[String],
    metric: Metric,
    embedder: Option<&dyn TextEmbedder>,
) -> Result<SimilarityMatrix> {
    let t = labels.len();
    let mut values = vec![vec![1.0; t]; t];
    let mut directional_sums = None;
    let need = || {
        embedder.ok_or_else(|| {
            Error::InvalidParameter(format!("metric {metric} needs an embedding backend"))
        })
    };
    match metric {
        Metric::Levenshtein => {
            for i in 0..t {
                for j in i + 1..t {
                    let s = levenshtein_similarity(&labels[i], &labels[j]);
                    values[i][j] = s;
                    values[j][i] = s;
                }
            }
        }
        Metric::LabelCosine => {
            if labels.iter().any(|l| l.trim().is_empty()) {
                return Err(Error::EmptyLabel);
            }
            if t > 0 {
                let e = unit_rows(&need()?.embed_texts(labels)?);
                for i in 0..t {
                    values[i][i] = dot(e.row(i), e.row(i));
                    for j in i + 1..t {
                        let s = dot(e.row(i), e.row(j));
                        values[i][j] = s;
                        values[j][i] = s;
                    }
                }
            }
        }
        Metric::GreedySemantic => {
            let token_lists = labels
                .iter()
                .map(|l| label_tokens(l))
                .collect::<Result<Vec<_>>>()?;
            let mut vocab: Vec<String> = token_lists.iter().flatten().cloned().collect();
            vocab.sort();
            vocab.dedup();
            if !vocab.is_empty() {
                let e = unit_rows(&need()?.embed_texts(&vocab)?);
                let row_of: HashMap<&str, usize> = vocab
                    .iter()
                    .enumerate()
                    .map(|(i, w)| (w.as_str(), i))
                    .collect();
                let per_label: Vec<Array2<f64>> = token_lists
                    .iter()
                    .map(|toks| {
                        e.select(
                            ndarray::Axis(0),
                            &toks.iter().map(|w| row_of[w.as_str()]).collect::<Vec<_>>(),
                        )
                    })
                    .collect();
                let (mut fwd, mut bwd) = (0.0, 0.0);
                for i in 0..t {
                    values[i][i] = greedy_from_rows(&per_label[i], &per_label[i]).score;
                    for j in i + 1..t {
                        let g = greedy_from_rows(&per_label[i], &per_label[j]);
                        values[i][j] = g.score;
                        values[j][i] = g.score;
                        fwd += g.forward;
                        bwd += g.backward;
                    }
                }
                if t >= 2 {
                    let pairs = (t * (t - 1) / 2) as f64;
                    directional_sums = Some((fwd / pairs, bwd / pairs));
                }
            }
        }
    }
    Ok(SimilarityMatrix {
        metric,
        labels: labels.to_vec(),
        values,
        directional: directional_sums,
    })
}

pub fn mean_pairwise_similarity(
    labels: &[String],
    metric: Metric,
    embedder: Option<&dyn TextEmbedder>,
) -> Result<f64> {
    if labels.len() < 2 {
        return mean_pairwise_by(labels.len(), |_, _| 0.0);
    }
    similarity_matrix(labels, metric, embedder)?.mean_pairwise()
}

/// `O / T`. `T = 0` is a degenerate model.
pub fn outlier_ratio(assignment: &Assignment) -> Result<f64> {
    ratio(assignment.outliers, assignment.n_topics)
}

pub fn ratio(outliers: usize, topics: usize) -> Result<f64> {
    if topics == 0 {
        return Err(Error::Degenerate("no topics".into()));
    }
    Ok(outliers as f64 / topics as f64)
}

/// Relative drop from `before` to `after`, in percent.
pub fn reduction_percent(before: usize, after: usize) -> f64 {
    if before == 0 {
        return 0.0;
    }
    100.0 * (before as f64 - after as f64) / before as f64
}

mod inf_as_null {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::Metric;

    pub fn serialize<S: Serializer>(m: &BTreeMap<Metric, f64>, s: S) -> Result<S::Ok, S::Error> {
        m.iter()
            .map(|(k, v)| (*k, v.is_finite().then_some(*v)))
            .collect::<BTreeMap<_, _>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<Metric, f64>, D::Error> {
        let m = BTreeMap::<Metric, Option<f64>>::deserialize(d)?;
        Ok(m.into_iter()
            .map(|(k, v)| (k, v.unwrap_or(f64::INFINITY)))
            .collect())
    }
}

/// Everything that goes into one checkpoint's objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AhamScore {
    pub checkpoint: EmbeddingCheckpoint,
    #[serde(rename = "T")]
    pub topic_count: usize,
    #[serde(rename = "O")]
    pub outlier_count: usize,
    /// `None` when `T = 0`.
    pub outlier_ratio: Option<f64>,
    pub mean_similarity: BTreeMap<Metric, f64>,
    /// `+inf` for degenerate models; serialized as `null`.
    #[serde(with = "inf_as_null")]
    pub objective: BTreeMap<Metric, f64>,
    pub degenerate: bool,
    /// Mean forward/backward greedy scores, when the greedy metric ran.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub greedy_directional: Option<(f64, f64)>,
}

impl AhamScore {
    /// Objective under `metric`; `+inf` when degenerate or not computed.
    pub fn objective(&self, metric: Metric) -> f64 {
        self.objective
            .get(&metric)
            .copied()
            .unwrap_or(f64::INFINITY)
    }

    /// Score from precomputed mean similarities.
    pub fn from_parts(
        checkpoint: EmbeddingCheckpoint,
        topic_count: usize,
        outlier_count: usize,
        mean_similarity: BTreeMap<Metric, f64>,
    ) -> Self {
        let degenerate = topic_count < 2;
        let ratio = ratio(outlier_count, topic_count).ok();
        let objective = mean_similarity
            .iter()
            .map(|(&m, &s)| {
                let v = match ratio {
                    Some(r) if !degenerate => r * s,
                    _ => f64::INFINITY,
                };
                (m, v)
            })
            .collect();
        AhamScore {
            checkpoint,
            topic_count,
            outlier_count,
            outlier_ratio: ratio,
            mean_similarity,
            objective,
            degenerate,
            greedy_directional: None,
        }
    }
}

/// Objective of one checkpoint under each of `metrics`. `labels` are the
/// names of topics `0..T`, outliers excluded.
pub fn aham_objective(
    assignment: &Assignment,
    labels: &[String],
    metrics: &[Metric],
    checkpoint: &EmbeddingCheckpoint,
    embedder: Option<&dyn TextEmbedder>,
) -> Result<AhamScore> {
    if labels.len() != assignment.n_topics {
        return Err(Error::Misaligned {
            labels: labels.len(),
            topics: assignment.n_topics,
        });
    }
    let t = assignment.n_topics;
    if t < 2 {
        let mut s =
            AhamScore::from_parts(checkpoint.clone(), t, assignment.outliers, BTreeMap::new());
        s.objective = metrics.iter().map(|&m| (m, f64::INFINITY)).collect();
        return Ok(s);
    }
    let mut means = BTreeMap::new();
    let mut directional = None;
    for &m in metrics {
        let sm = similarity_matrix(labels, m, embedder)?;
        means.insert(m, sm.mean_pairwise()?);
        if m == Metric::GreedySemantic {
            directional = sm.directional;
        }
    }
    let mut score = AhamScore::from_parts(checkpoint.clone(), t, assignment.outliers, means);
    score.greedy_directional = directional;
    Ok(score)
}

/// Argmin of the objective under `metric`; ties go to the smallest step and
/// degenerate scores never win.
pub fn select_best_checkpoint(scores: &[AhamScore], metric: Metric) -> Result<&AhamScore> {
    scores
        .iter()
        .filter(|s| !s.degenerate && s.objective(metric).is_finite())
        .min_by(|a, b| {
            a.objective(metric)
                .total_cmp(&b.objective(metric))
                .then(a.checkpoint.step.cmp(&b.checkpoint.step))
        })
        .ok_or_else(|| Error::Degenerate("every checkpoint is degenerate".into()))
}
