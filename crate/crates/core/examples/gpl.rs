//! Build a GPL triplet file on mock backends and verify its margins.

use std::sync::Arc;

use aham::backends::mock::{HashedBagEmbedder, RuleGenerator, TokenOverlapCrossEncoder};
use aham::backends::{CheckpointRegistry, EmbeddingClient, GenerationParams, VectorCache};
use aham::gpl::{build_gpl_dataset, GplBackends, GplConfig};
use aham::synthetic::{planted_corpus, PlantedSpec};

fn main() -> aham::Result<()> {
    let corpus = planted_corpus(&PlantedSpec::default()).corpus;
    let emb = HashedBagEmbedder::new(128);
    let registry = CheckpointRegistry::new(emb.checkpoints().to_vec())?;
    let client = EmbeddingClient::new(Arc::new(emb), registry, VectorCache::in_memory(), 32)?;
    let base = client.registry().base().clone();
    let embedder = client.at(&base);
    let generator = RuleGenerator::first_words(6);
    let backends = GplBackends {
        generator: &generator,
        base: &embedder,
        cross_encoder: &TokenOverlapCrossEncoder,
        params: GenerationParams::default(),
    };

    let ds = build_gpl_dataset(&corpus, &GplConfig::default(), &backends, None)?;
    ds.verify(&corpus, &TokenOverlapCrossEncoder)?;
    println!("{} triplets", ds.triplets.len());
    for line in ds.to_jsonl().lines().take(4) {
        println!("{line}");
    }
    Ok(())
}
