//! Topic representations: class-based TF-IDF, embedding-ranked keywords and
//! central documents.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::backends::TextEmbedder;
use crate::cluster::Assignment;
use crate::corpus::{Corpus, Document};
use crate::error::{Error, Result};
use crate::text;

pub const DEFAULT_MAX_KEYWORDS: usize = 10;
pub const DEFAULT_CENTRAL_DOCS: usize = 3;

/// Class-based TF-IDF over the non-outlier topics.
///
/// Row `t` holds `tf(term, topic t) * ln(1 + A / f(term))`, L1-normalized,
/// where `A` is the mean token count per topic and `f(term)` the term's
/// frequency over the whole corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CtfIdf {
    /// Sorted vocabulary, stopwords excluded.
    pub vocabulary: Vec<String>,
    /// `T x V`, row `t` for topic `t`.
    pub weights: Vec<Vec<f64>>,
}

impl CtfIdf {
    /// Highest-weighted terms of topic `t`, ties alphabetical.
    pub fn top_terms(&self, t: usize, n: usize) -> Vec<(String, f64)> {
        let mut terms: Vec<(String, f64)> = self
            .vocabulary
            .iter()
            .zip(&self.weights[t])
            .filter(|(_, &w)| w > 0.0)
            .map(|(v, &w)| (v.clone(), w))
            .collect();
        terms.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        terms.truncate(n);
        terms
    }

    pub fn weight(&self, t: usize, term: &str) -> f64 {
        self.vocabulary
            .binary_search_by(|v| v.as_str().cmp(term))
            .map_or(0.0, |i| self.weights[t][i])
    }
}

pub fn ctfidf_weights(corpus: &Corpus, assignment: &Assignment) -> Result<CtfIdf> {
    if assignment.len() != corpus.len() {
        return Err(Error::CorpusMismatch(format!(
            "{} labels for {} documents",
            assignment.len(),
            corpus.len()
        )));
    }
    let t = assignment.n_topics;
    if t == 0 {
        return Err(Error::Degenerate(
            "c-TF-IDF needs at least one topic".into(),
        ));
    }

    let mut corpus_freq: BTreeMap<String, f64> = BTreeMap::new();
    let mut topic_tf: Vec<BTreeMap<String, f64>> = vec![BTreeMap::new(); t];
    for (doc, &label) in corpus.documents.iter().zip(&assignment.labels) {
        for tok in text::content_tokens(&doc.text) {
            *corpus_freq.entry(tok.clone()).or_default() += 1.0;
            if label >= 0 {
                *topic_tf[label as usize].entry(tok).or_default() += 1.0;
            }
        }
    }
    for (k, tf) in topic_tf.iter().enumerate() {
        if tf.is_empty() {
            return Err(Error::Topic {
                topic_id: k as i64,
                reason: "no content tokens in topic text".into(),
            });
        }
    }

    let total_tokens: f64 = topic_tf.iter().flat_map(|m| m.values()).sum();
    let avg = total_tokens / t as f64;
    let vocabulary: Vec<String> = topic_tf
        .iter()
        .flat_map(|m| m.keys().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    let weights = topic_tf
        .iter()
        .map(|tf| {
            let mut row: Vec<f64> = vocabulary
                .iter()
                .map(|term| {
                    tf.get(term)
                        .map_or(0.0, |&c| c * (1.0 + avg / corpus_freq[term]).ln())
                })
                .collect();
            let sum: f64 = row.iter().sum();
            row.iter_mut().for_each(|w| *w /= sum);
            row
        })
        .collect();
    Ok(CtfIdf {
        vocabulary,
        weights,
    })
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
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

fn centroid_of(rows: &Array2<f32>, members: &[usize]) -> Result<Array1<f64>> {
    if members.is_empty() {
        return Err(Error::InvalidParameter("topic has no members".into()));
    }
    let sel = rows.select(Axis(0), members).mapv(f64::from);
    Ok(sel.mean_axis(Axis(0)).expect("non-empty"))
}

/// The `n` members closest in cosine to the member centroid, best first;
/// ties go to the lower index. Returns all members when there are fewer
/// than `n`.
pub fn central_documents(
    members: &[usize],
    embeddings: &Array2<f32>,
    n: usize,
) -> Result<Vec<usize>> {
    let centroid = centroid_of(embeddings, members)?;
    let c = centroid.to_vec();
    let mut scored: Vec<(f64, usize)> = members
        .iter()
        .map(|&i| {
            let row: Vec<f64> = embeddings.row(i).iter().map(|&v| f64::from(v)).collect();
            (cosine(&row, &c), i)
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    Ok(scored.into_iter().take(n).map(|(_, i)| i).collect())
}

/// Up to `max_keywords` unigram/bigram candidates from `docs`, ranked by
/// cosine to `centroid`; ties alphabetical.
pub fn extract_topic_keywords(
    docs: &[&Document],
    centroid: &[f64],
    embedder: &dyn TextEmbedder,
    max_keywords: usize,
) -> Result<Vec<(String, f64)>> {
    let mut seen = BTreeSet::new();
    let candidates: Vec<String> = docs
        .iter()
        .flat_map(|d| text::candidate_phrases(&d.text))
        .filter(|c| seen.insert(c.to_lowercase()))
        .collect();
    if candidates.is_empty() {
        return Err(Error::InvalidParameter(
            "no keyword candidates after stopword filtering".into(),
        ));
    }
    let emb = embedder.embed_texts(&candidates)?;
    let mut scored: Vec<(String, f64)> = candidates
        .into_iter()
        .zip(emb.rows())
        .map(|(c, row)| {
            let v: Vec<f64> = row.iter().map(|&x| f64::from(x)).collect();
            let s = cosine(&v, centroid);
            (c, s)
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(max_keywords);
    Ok(scored)
}

/// Keywords, representative documents and centroid of one topic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicRepresentation {
    pub topic_id: i64,
    pub size: usize,
    pub keywords: Vec<(String, f64)>,
    pub central_docs: Vec<String>,
    pub centroid: Vec<f32>,
}

impl TopicRepresentation {
    pub fn keyword_terms(&self) -> Vec<&str> {
        self.keywords.iter().map(|(k, _)| k.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RepresentationConfig {
    pub max_keywords: usize,
    pub central_docs: usize,
}

impl Default for RepresentationConfig {
    fn default() -> Self {
        RepresentationConfig {
            max_keywords: DEFAULT_MAX_KEYWORDS,
            central_docs: DEFAULT_CENTRAL_DOCS,
        }
    }
}

/// Representation of every non-outlier topic, in topic order. `embeddings`
/// are the document embeddings of the checkpoint, row-aligned with `corpus`.
pub fn represent_topics(
    corpus: &Corpus,
    assignment: &Assignment,
    embeddings: &Array2<f32>,
    embedder: &dyn TextEmbedder,
    config: &RepresentationConfig,
) -> Result<Vec<TopicRepresentation>> {
    if assignment.len() != corpus.len() || embeddings.nrows() != corpus.len() {
        return Err(Error::CorpusMismatch(format!(
            "{} documents, {} labels, {} embedding rows",
            corpus.len(),
            assignment.len(),
            embeddings.nrows()
        )));
    }
    (0..assignment.n_topics as i64)
        .map(|t| {
            let members = assignment.members(t);
            let centroid = centroid_of(embeddings, &members)?;
            let docs: Vec<&Document> = members.iter().map(|&i| &corpus.documents[i]).collect();
            let keywords = extract_topic_keywords(
                &docs,
                centroid.as_slice().expect("contiguous"),
                embedder,
                config.max_keywords,
            )
            .map_err(|e| Error::Topic {
                topic_id: t,
                reason: e.to_string(),
            })?;
            let central = central_documents(&members, embeddings, config.central_docs)?;
            Ok(TopicRepresentation {
                topic_id: t,
                size: members.len(),
                keywords,
                central_docs: central
                    .into_iter()
                    .map(|i| corpus.documents[i].id.clone())
                    .collect(),
                centroid: centroid.iter().map(|&v| v as f32).collect(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn corpus(texts: &[&str]) -> Corpus {
        Corpus::new(
            texts
                .iter()
                .enumerate()
                .map(|(i, t)| Document::new(format!("d{i}"), t, None, None))
                .collect(),
            "test",
        )
        .unwrap()
    }

    #[test]
    fn single_term_row_is_one() {
        let c = corpus(&["x x x"]);
        let w = ctfidf_weights(&c, &Assignment::from_labels(&[0])).unwrap();
        assert_eq!(w.vocabulary, vec!["x"]);
        assert_eq!(w.weights, vec![vec![1.0]]);
    }

    #[test]
    fn topic_without_content_tokens_is_an_error() {
        let c = corpus(&["graph graph", "the of and"]);
        let err = ctfidf_weights(&c, &Assignment::from_labels(&[0, 1])).unwrap_err();
        assert!(matches!(err, Error::Topic { topic_id: 1, .. }), "{err}");
    }

    #[test]
    fn hand_computed_weights() {
        // topic 0: p p q, topic 1: q r, outlier doc: r
        let c = corpus(&["p p q", "q r", "r"]);
        let w = ctfidf_weights(&c, &Assignment::from_labels(&[0, 1, -1])).unwrap();
        let avg: f64 = 5.0 / 2.0;
        // every term occurs twice in the corpus
        let r0 = [2.0 * (1.0 + avg / 2.0).ln(), (1.0 + avg / 2.0).ln(), 0.0];
        let s0: f64 = r0.iter().sum();
        for (k, term) in ["p", "q", "r"].iter().enumerate() {
            assert!((w.weight(0, term) - r0[k] / s0).abs() < 1e-12);
        }
        assert!((w.weight(1, "q") - 0.5).abs() < 1e-12);
    }

    #[test]
    fn central_documents_prefix_property_and_ties() {
        let e = array![
            [1.0f32, 0.0],
            [0.0, 1.0],
            [1.0, 1.0],
            [2.0, 2.0],
            [1.0, 0.1]
        ];
        let members = [0, 1, 2, 3, 4];
        let three = central_documents(&members, &e, 3).unwrap();
        let four = central_documents(&members, &e, 4).unwrap();
        assert_eq!(&four[..3], &three[..]);
        // rows 2 and 3 point the same way; lower index first
        assert_eq!(three[..2], [2, 3]);
        assert_eq!(central_documents(&[1, 4], &e, 3).unwrap().len(), 2);
    }

    struct Fixed;
    impl TextEmbedder for Fixed {
        fn embed_texts(&self, texts: &[String]) -> Result<Array2<f32>> {
            // every candidate gets the same vector
            Ok(Array2::from_elem((texts.len(), 2), 1.0))
        }
    }

    #[test]
    fn equal_keyword_scores_sort_alphabetically() {
        let c = corpus(&["zeta alpha, mid"]);
        let docs: Vec<&Document> = c.documents.iter().collect();
        let kw = extract_topic_keywords(&docs, &[1.0, 1.0], &Fixed, 10).unwrap();
        let terms: Vec<&str> = kw.iter().map(|(k, _)| k.as_str()).collect();
        assert_eq!(terms, vec!["alpha", "mid", "zeta", "zeta alpha"]);
        let empty = corpus(&["the and of"]);
        let docs: Vec<&Document> = empty.documents.iter().collect();
        assert!(extract_topic_keywords(&docs, &[1.0, 1.0], &Fixed, 10).is_err());
    }
}
