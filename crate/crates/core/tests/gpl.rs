use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use aham::backends::http::HttpBackend;
use aham::backends::mock::{HashedBagEmbedder, RuleGenerator, TokenOverlapCrossEncoder};
use aham::backends::{
    CheckpointRegistry, EmbeddingClient, GenerationBackend, GenerationParams, Prompt, TextEmbedder,
    VectorCache,
};
use aham::corpus::{Corpus, Document};
use aham::gpl::*;
use aham::runner::{cmd_gpl_build, cmd_ingest, Backends, RunManifest};
use aham::synthetic::{planted_corpus, PlantedSpec};
use aham::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_corpus(n: usize) -> Corpus {
    let p = planted_corpus(&PlantedSpec {
        docs_per_topic: n.div_ceil(3),
        ..Default::default()
    });
    let docs = p.corpus.documents.into_iter().take(n).collect();
    Corpus::new(docs, "small").unwrap()
}

fn base_client(dim: usize) -> EmbeddingClient {
    let emb = HashedBagEmbedder::new(dim);
    let registry = CheckpointRegistry::new(emb.checkpoints().to_vec()).unwrap();
    EmbeddingClient::new(
        std::sync::Arc::new(emb),
        registry,
        VectorCache::in_memory(),
        16,
    )
    .unwrap()
}

fn build(
    corpus: &Corpus,
    config: &GplConfig,
    generator: &dyn GenerationBackend,
) -> Result<GplDataset, Error> {
    let client = base_client(128);
    let base = client.registry().base().clone();
    let embedder = client.at(&base);
    let backends = GplBackends {
        generator,
        base: &embedder,
        cross_encoder: &TokenOverlapCrossEncoder,
        params: GenerationParams::default(),
    };
    build_gpl_dataset(corpus, config, &backends, None)
}

#[test]
fn three_queries_per_passage() {
    let corpus = small_corpus(10);
    let g = RuleGenerator::first_words(6);
    let queries = generate_queries(&corpus, 3, &g, &GenerationParams::default()).unwrap();
    assert_eq!(queries.len(), 10);
    assert_eq!(queries.iter().map(|(_, q)| q.len()).sum::<usize>(), 30);
    for ((id, qs), doc) in queries.iter().zip(&corpus.documents) {
        assert_eq!(id, &doc.id);
        let first: Vec<&str> = doc.text.split_whitespace().take(6).collect();
        assert_eq!(qs[0], format!("{}?", first.join(" ")));
    }
    assert!(matches!(
        generate_queries(&corpus, 0, &g, &GenerationParams::default()),
        Err(Error::InvalidParameter(_))
    ));
}

#[test]
fn empty_generations_give_empty_lists() {
    let corpus = small_corpus(4);
    let g = RuleGenerator::fixed("");
    let queries = generate_queries(&corpus, 2, &g, &GenerationParams::default()).unwrap();
    assert!(queries.iter().all(|(_, q)| q.is_empty()));
    let ds = build(&corpus, &GplConfig::default(), &g).unwrap();
    assert!(ds.triplets.is_empty());
}

#[test]
fn unreachable_backend_is_an_error() {
    let corpus = small_corpus(3);
    // port 9 (discard) on localhost is closed in the sandbox
    let http = HttpBackend::new("http://127.0.0.1:9", Duration::from_millis(500));
    assert!(matches!(
        generate_queries(&corpus, 1, &http, &GenerationParams::default()),
        Err(Error::Backend(_))
    ));
}

#[test]
fn dataset_is_byte_identical_and_verifies() {
    let corpus = small_corpus(30);
    let config = GplConfig::default();
    let g = RuleGenerator::first_words(6);
    let a = build(&corpus, &config, &g).unwrap().to_jsonl();
    let b = build(&corpus, &config, &g).unwrap().to_jsonl();
    assert_eq!(a, b);
    let ds = GplDataset::from_jsonl(&a).unwrap();
    assert_eq!(ds.triplets.len(), 90);
    assert_eq!(ds.header.corpus_id, corpus.content_id());
    ds.verify(&corpus, &TokenOverlapCrossEncoder).unwrap();
    assert!(ds.triplets.iter().all(|t| t.positive_id != t.negative_id));

    let other = build(&corpus, &GplConfig { seed: 43, ..config }, &g)
        .unwrap()
        .to_jsonl();
    assert_ne!(a, other);
}

#[test]
fn header_line_carries_the_parameters() {
    let corpus = small_corpus(3);
    let ds = build(
        &corpus,
        &GplConfig::default(),
        &RuleGenerator::first_words(4),
    )
    .unwrap();
    let header = ds.to_jsonl().lines().next().unwrap().to_string();
    let v: serde_json::Value = serde_json::from_str(&header).unwrap();
    assert_eq!(v["seed"], 42);
    assert_eq!(v["q"], 3);
    assert_eq!(v["nucleus_p"], 0.9);
    assert_eq!(v["pool_size"], 50);
    let line = ds.to_jsonl().lines().nth(1).unwrap().to_string();
    let t: serde_json::Value = serde_json::from_str(&line).unwrap();
    for key in ["query", "pos", "neg", "margin"] {
        assert!(t.get(key).is_some(), "{key}");
    }
}

#[test]
fn tampered_margin_fails_verification() {
    let corpus = small_corpus(6);
    let mut ds = build(
        &corpus,
        &GplConfig::default(),
        &RuleGenerator::first_words(5),
    )
    .unwrap();
    ds.triplets[2].margin += 0.5;
    assert!(ds.verify(&corpus, &TokenOverlapCrossEncoder).is_err());
}

#[test]
fn single_document_corpus_is_rejected() {
    let corpus = Corpus::new(vec![Document::new("a", "Graphs", None, None)], "one").unwrap();
    assert!(matches!(
        build(
            &corpus,
            &GplConfig::default(),
            &RuleGenerator::first_words(3)
        ),
        Err(Error::InsufficientData { .. })
    ));
}

#[test]
fn two_document_corpus_forces_the_other_negative() {
    let corpus = small_corpus(2);
    let ds = build(
        &corpus,
        &GplConfig::default(),
        &RuleGenerator::first_words(3),
    )
    .unwrap();
    for t in &ds.triplets {
        let other = if t.positive_id == corpus.documents[0].id {
            1
        } else {
            0
        };
        assert_eq!(t.negative_id, corpus.documents[other].id);
    }
}

#[test]
fn margin_is_the_raw_score_difference() {
    let m = compute_margin(
        "gene protein",
        "gene protein data",
        "market",
        &TokenOverlapCrossEncoder,
    )
    .unwrap();
    assert_eq!(m, 2.0);
    let m = compute_margin("market", "gene", "market stock", &TokenOverlapCrossEncoder).unwrap();
    assert_eq!(m, -1.0);
}

/// Succeeds `ok` times, then fails like a dropped connection.
struct Flaky {
    ok: usize,
    calls: AtomicUsize,
}

impl GenerationBackend for Flaky {
    fn generate(&self, prompt: &Prompt, params: &GenerationParams) -> aham::Result<String> {
        if self.calls.fetch_add(1, Ordering::SeqCst) >= self.ok {
            return Err(Error::Backend("connection reset".into()));
        }
        RuleGenerator::first_words(5).generate(prompt, params)
    }
}

#[test]
fn backend_failure_leaves_partial_progress() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = small_corpus(6);
    let client = base_client(64);
    let base = client.registry().base().clone();
    let embedder = client.at(&base);
    let flaky = Flaky {
        ok: 7,
        calls: AtomicUsize::new(0),
    };
    let backends = GplBackends {
        generator: &flaky,
        base: &embedder,
        cross_encoder: &TokenOverlapCrossEncoder,
        params: GenerationParams::default(),
    };
    let partial = tmp.path().join("partial.jsonl");
    let err =
        build_gpl_dataset(&corpus, &GplConfig::default(), &backends, Some(&partial)).unwrap_err();
    assert!(matches!(err, Error::Backend(_)));
    // 7 successful calls complete two passages of three queries each
    let saved = GplDataset::read(&partial).unwrap();
    assert_eq!(saved.triplets.len(), 6);
    saved.verify(&corpus, &TokenOverlapCrossEncoder).unwrap();
}

#[test]
fn runner_writes_gpl_jsonl_once() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = small_corpus(9);
    let path = tmp.path().join("c.jsonl");
    corpus.write_jsonl(&path).unwrap();
    let run = cmd_ingest(tmp.path().join("runs"), RunManifest::new("g", &path)).unwrap();
    let b = Backends::mock(HashedBagEmbedder::new(64), RuleGenerator::demo());
    let ds = cmd_gpl_build(&run, &b, &GplConfig::default()).unwrap();
    assert_eq!(run.gpl_dataset().unwrap(), ds);
    // same inputs: no-op; different seed: the file is not replaced
    cmd_gpl_build(&run, &b, &GplConfig::default()).unwrap();
    assert!(matches!(
        cmd_gpl_build(
            &run,
            &b,
            &GplConfig {
                seed: 1,
                ..Default::default()
            }
        ),
        Err(Error::Store(_))
    ));
}

#[test]
fn nucleus_of_one_mass_draws_only_the_nearest() {
    let client = base_client(64);
    let base = client.registry().base().clone();
    let corpus = small_corpus(12);
    let emb = client.at(&base).embed_texts(&corpus.texts()).unwrap();
    let q = client
        .at(&base)
        .embed_texts(&[corpus.documents[0].text.clone()])
        .unwrap();
    let mut best = (f64::NEG_INFINITY, 0);
    for i in 1..corpus.len() {
        let s: f64 = q
            .row(0)
            .iter()
            .zip(emb.row(i))
            .map(|(&a, &b)| f64::from(a) * f64::from(b))
            .sum();
        if s > best.0 {
            best = (s, i);
        }
    }
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        assert_eq!(
            mine_negative(q.row(0), 0, &emb, 1.0, 1, &mut rng).unwrap(),
            best.1
        );
    }
}

proptest! {
    #[test]
    fn nucleus_is_the_smallest_prefix_reaching_p(
        mut scores in prop::collection::vec(-5.0f64..5.0, 1..30),
        p in 0.01f64..=1.0,
    ) {
        scores.sort_by(|a, b| b.total_cmp(a));
        let kept = nucleus(&scores, p);
        let z: f64 = scores.iter().map(|s| s.exp()).sum();
        let probs: Vec<f64> = scores.iter().map(|s| s.exp() / z).collect();
        let mass: f64 = kept.iter().sum();
        prop_assert!(!kept.is_empty() && kept.len() <= scores.len());
        prop_assert!(mass >= p - 1e-9);
        let before: f64 = probs[..kept.len() - 1].iter().sum();
        prop_assert!(before < p + 1e-9);
    }

    #[test]
    fn mined_negative_is_never_the_positive(seed in 0u64..1000, pos in 0usize..8, pool in 1usize..10) {
        let client = base_client(32);
        let base = client.registry().base().clone();
        let corpus = small_corpus(8);
        let emb = client.at(&base).embed_texts(&corpus.texts()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let neg = mine_negative(emb.row(pos), pos, &emb, 0.9, pool, &mut rng).unwrap();
        prop_assert_ne!(neg, pos);
        prop_assert!(neg < 8);
    }
}
