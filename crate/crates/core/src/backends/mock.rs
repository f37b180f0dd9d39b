//! Deterministic in-process backends.
//!
//! - [`HashedBagEmbedder`]: feature-hashed bag of words. Each token lands in
//!   one signed bucket, so texts with disjoint bucket sets are exactly
//!   orthogonal. Per-checkpoint token weights let tests build "adapted"
//!   checkpoints that emphasise chosen vocabulary.
//! - [`RuleGenerator`]: answers prompts with a fixed rule.
//! - [`TokenOverlapCrossEncoder`]: number of distinct shared word tokens.

use std::collections::{HashMap, HashSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::{
    CheckpointSource, CrossEncoderBackend, EmbeddingBackend, EmbeddingCheckpoint,
    GenerationBackend, GenerationParams, Prompt,
};
use crate::error::{Error, Result};
use crate::text;

fn fnv1a(bytes: &[u8], seed: u64) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[derive(Debug, Clone)]
pub struct HashedBagEmbedder {
    dim: usize,
    seed: u64,
    skip_stopwords: bool,
    checkpoints: Vec<EmbeddingCheckpoint>,
    weights: HashMap<String, HashMap<String, f32>>,
    calls: std::sync::Arc<AtomicUsize>,
}

impl HashedBagEmbedder {
    /// Embedder of width `dim` with a single base checkpoint `base` at step 0.
    pub fn new(dim: usize) -> Self {
        HashedBagEmbedder {
            dim,
            seed: 0,
            skip_stopwords: true,
            checkpoints: vec![EmbeddingCheckpoint::new("base", 0, dim)],
            weights: HashMap::new(),
            calls: Default::default(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn keep_stopwords(mut self) -> Self {
        self.skip_stopwords = false;
        self
    }

    /// Register an extra checkpoint whose token weights default to 1 except
    /// for the entries in `weights`.
    pub fn with_checkpoint(
        mut self,
        id: impl Into<String>,
        step: u64,
        weights: HashMap<String, f32>,
    ) -> Self {
        let id = id.into();
        self.checkpoints
            .push(EmbeddingCheckpoint::new(id.clone(), step, self.dim));
        self.weights.insert(id, weights);
        self
    }

    pub fn checkpoints(&self) -> &[EmbeddingCheckpoint] {
        &self.checkpoints
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    /// Bucket and sign a token hashes to.
    pub fn bucket(&self, token: &str) -> (usize, f32) {
        let h = fnv1a(token.as_bytes(), self.seed);
        let sign = if (h >> 63) == 0 { 1.0 } else { -1.0 };
        ((h % self.dim as u64) as usize, sign)
    }

    pub fn embed_one(&self, s: &str, checkpoint_id: &str) -> Vec<f32> {
        let weights = self.weights.get(checkpoint_id);
        let mut v = vec![0.0f32; self.dim];
        let mut any = false;
        for tok in text::word_tokens(s) {
            if self.skip_stopwords && text::is_stopword(&tok) {
                continue;
            }
            let w = weights.and_then(|m| m.get(&tok)).copied().unwrap_or(1.0);
            let (b, sign) = self.bucket(&tok);
            v[b] += sign * w;
            any = true;
        }
        if !any || v.iter().all(|&x| x == 0.0) {
            let (b, sign) = self.bucket(&format!("\u{0}{s}"));
            v[b] = sign;
        }
        v
    }
}

impl EmbeddingBackend for HashedBagEmbedder {
    fn embed(&self, texts: &[String], checkpoint: &EmbeddingCheckpoint) -> Result<Vec<Vec<f32>>> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        if !self
            .checkpoints
            .iter()
            .any(|c| c.checkpoint_id == checkpoint.checkpoint_id)
        {
            return Err(Error::UnknownCheckpoint(checkpoint.checkpoint_id.clone()));
        }
        Ok(texts
            .iter()
            .map(|t| self.embed_one(t, &checkpoint.checkpoint_id))
            .collect())
    }
}

impl CheckpointSource for HashedBagEmbedder {
    fn list_checkpoints(&self) -> Result<Vec<EmbeddingCheckpoint>> {
        Ok(self.checkpoints.clone())
    }
}

type Rule = Box<dyn Fn(&Prompt) -> String + Send + Sync>;

/// Generator driven by a closure over the prompt.
pub struct RuleGenerator {
    rule: Rule,
    calls: AtomicUsize,
}

impl std::fmt::Debug for RuleGenerator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RuleGenerator")
            .field("calls", &self.calls)
            .finish_non_exhaustive()
    }
}

/// Marker line prefix the query-generation prompt puts before the passage.
pub const PASSAGE_MARKER: &str = "Passage:";
const KEYWORDS_MARKER: &str = "keywords:";

impl RuleGenerator {
    pub fn from_fn(rule: impl Fn(&Prompt) -> String + Send + Sync + 'static) -> Self {
        RuleGenerator {
            rule: Box::new(rule),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn fixed(answer: impl Into<String>) -> Self {
        let answer = answer.into();
        Self::from_fn(move |_| answer.clone())
    }

    /// First keyword from the query's keyword line.
    pub fn echo_first_keyword() -> Self {
        Self::from_fn(first_keyword)
    }

    /// First `n` words of the passage, as a question.
    pub fn first_words(n: usize) -> Self {
        Self::from_fn(move |p| passage_question(p, n))
    }

    /// One generator for every prompt kind the pipeline sends: passage
    /// prompts get [`Self::first_words`] (8 words), classification prompts
    /// get `methodology` when the title mentions a method-like word and
    /// `application` otherwise, and topic prompts get their first keyword.
    pub fn demo() -> Self {
        Self::from_fn(|p| {
            let query = query_block(p);
            if query.contains(PASSAGE_MARKER) {
                passage_question(p, 8)
            } else if query.contains("'application'") {
                // the title is the line after the query's opening line
                let title = query.lines().nth(1).unwrap_or_default();
                let methodish = text::word_tokens(title).iter().any(|t| {
                    matches!(
                        t.as_str(),
                        "method" | "methods" | "algorithm" | "approach" | "framework" | "model"
                    )
                });
                if methodish {
                    "methodology"
                } else {
                    "application"
                }
                .to_string()
            } else {
                first_keyword(p)
            }
        })
    }

    /// Cycle through `answers`, one per call.
    pub fn cycle(answers: Vec<String>) -> Self {
        let next = Mutex::new(0usize);
        Self::from_fn(move |_| {
            let mut i = next.lock().expect("cycle lock");
            let out = answers[*i % answers.len()].clone();
            *i += 1;
            out
        })
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

/// The query section. A prompt flattened to plain text (as sent over the
/// wire) ends with its query after the last blank line.
fn query_block(p: &Prompt) -> &str {
    p.query.rsplit("\n\n").next().unwrap_or(&p.query)
}

fn first_keyword(p: &Prompt) -> String {
    query_block(p)
        .lines()
        .find_map(|line| {
            let lower = line.to_lowercase();
            let at = lower.find(KEYWORDS_MARKER)?;
            line[at + KEYWORDS_MARKER.len()..]
                .split(',')
                .map(str::trim)
                .find(|k| !k.is_empty())
                .map(str::to_string)
        })
        .unwrap_or_default()
}

fn passage_question(p: &Prompt, n: usize) -> String {
    let passage = match p.query.rfind(PASSAGE_MARKER) {
        Some(at) => &p.query[at + PASSAGE_MARKER.len()..],
        None => p.query.as_str(),
    };
    let words: Vec<&str> = passage.split_whitespace().take(n).collect();
    if words.is_empty() {
        String::new()
    } else {
        format!("{}?", words.join(" "))
    }
}

impl GenerationBackend for RuleGenerator {
    fn generate(&self, prompt: &Prompt, params: &GenerationParams) -> Result<String> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let out = (self.rule)(prompt);
        // whitespace tokens stand in for model tokens
        let words: Vec<&str> = out.split_whitespace().collect();
        if words.len() > params.max_new_tokens {
            return Ok(words[..params.max_new_tokens].join(" "));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TokenOverlapCrossEncoder;

impl TokenOverlapCrossEncoder {
    pub fn score(a: &str, b: &str) -> f64 {
        let ta: HashSet<String> = text::word_tokens(a).into_iter().collect();
        let tb: HashSet<String> = text::word_tokens(b).into_iter().collect();
        ta.intersection(&tb).count() as f64
    }
}

impl CrossEncoderBackend for TokenOverlapCrossEncoder {
    fn cross_encode(&self, pairs: &[(String, String)]) -> Result<Vec<f64>> {
        Ok(pairs.iter().map(|(a, b)| Self::score(a, b)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn token_overlap_contract() {
        assert_eq!(TokenOverlapCrossEncoder::score("a b", "a c"), 1.0);
        assert_eq!(TokenOverlapCrossEncoder::score("x y z", "x y z"), 3.0);
    }

    #[test]
    fn first_words_reads_after_passage_marker() {
        let g = RuleGenerator::first_words(5);
        let p = Prompt::plain("Write a query.\nPassage: one two three four five six seven");
        let out = g.generate(&p, &GenerationParams::default()).unwrap();
        assert_eq!(out, "one two three four five?");
    }

    #[test]
    fn echo_first_keyword_ignores_one_shot_section() {
        let g = RuleGenerator::echo_first_keyword();
        let p = Prompt {
            system: String::new(),
            one_shot: "The topic is described by the following keywords: bisociative".into(),
            query: "The topic is described by the following keywords: outlier, mining".into(),
        };
        assert_eq!(
            g.generate(&p, &GenerationParams::default()).unwrap(),
            "outlier"
        );
    }

    #[test]
    fn demo_dispatches_on_prompt_kind() {
        let g = RuleGenerator::demo();
        let params = GenerationParams::default();
        let bundle = crate::naming::ClassificationBundle::default();
        let doc = |t: &str| crate::corpus::Document::new("d", t, None, None);
        let ask = |t: &str| {
            g.generate(&bundle.render(&doc(t)).unwrap(), &params)
                .unwrap()
        };
        assert_eq!(ask("A fast algorithm for graph mining"), "methodology");
        assert_eq!(ask("Fish oil and Raynaud phenomenon"), "application");
        let q = Prompt::plain("Write a query.\nPassage: alpha beta");
        assert_eq!(g.generate(&q, &params).unwrap(), "alpha beta?");
    }

    #[test]
    fn rules_read_the_query_of_a_flattened_prompt() {
        let g = RuleGenerator::demo();
        let params = GenerationParams::default();
        let bundle = crate::naming::ClassificationBundle::default();
        let doc = crate::corpus::Document::new("d", "Fish oil and Raynaud phenomenon", None, None);
        let flat = Prompt::plain(bundle.render(&doc).unwrap().to_plain_text());
        assert_eq!(g.generate(&flat, &params).unwrap(), "application");
        let topic = Prompt {
            system: "sys".into(),
            one_shot: "The topic is described by the following keywords: bisociative".into(),
            query: "The topic is described by the following keywords: outlier, mining".into(),
        };
        let flat = Prompt::plain(topic.to_plain_text());
        assert_eq!(g.generate(&flat, &params).unwrap(), "outlier");
    }

    #[test]
    fn generator_respects_token_budget() {
        let g = RuleGenerator::fixed("a b c d e");
        let params = GenerationParams {
            max_new_tokens: 2,
            ..Default::default()
        };
        assert_eq!(g.generate(&Prompt::plain("x"), &params).unwrap(), "a b");
    }

    #[test]
    fn cycle_alternates() {
        let g = RuleGenerator::cycle(vec!["x".into(), "y".into()]);
        let p = Prompt::plain("q");
        let got: Vec<String> = (0..3)
            .map(|_| g.generate(&p, &GenerationParams::default()).unwrap())
            .collect();
        assert_eq!(got, vec!["x", "y", "x"]);
        assert_eq!(g.calls(), 3);
    }

    #[test]
    fn checkpoint_weights_change_vectors() {
        let mut w = HashMap::new();
        w.insert("graph".to_string(), 5.0);
        let e = HashedBagEmbedder::new(64).with_checkpoint("adapted", 10, w);
        let base = e.embed_one("graph mining", "base");
        let adapted = e.embed_one("graph mining", "adapted");
        assert_ne!(base, adapted);
        let (b, sign) = e.bucket("graph");
        assert_eq!(
            adapted[b],
            5.0 * sign
                + if e.bucket("mining").0 == b {
                    e.bucket("mining").1
                } else {
                    0.0
                }
        );
    }
}
