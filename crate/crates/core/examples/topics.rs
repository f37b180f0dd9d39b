//! c-TF-IDF terms, embedding-ranked keywords and generated labels for a
//! planted corpus.

use aham::backends::mock::{HashedBagEmbedder, RuleGenerator};
use aham::backends::{CheckpointRegistry, EmbeddingClient, VectorCache};
use aham::cluster::Assignment;
use aham::naming::TopicNamer;
use aham::synthetic::{planted_corpus, PlantedSpec};
use aham::topics::{ctfidf_weights, represent_topics, RepresentationConfig};
use std::sync::Arc;

fn main() -> aham::Result<()> {
    let p = planted_corpus(&PlantedSpec::default());
    let labels: Vec<i64> = p.topics.iter().map(|&t| t as i64).collect();
    let assignment = Assignment::from_labels(&labels);

    let w = ctfidf_weights(&p.corpus, &assignment)?;
    for t in 0..assignment.n_topics {
        let terms: Vec<String> = w
            .top_terms(t, 4)
            .into_iter()
            .map(|(term, s)| format!("{term} {s:.3}"))
            .collect();
        println!("ctfidf {t}: {}", terms.join(", "));
    }

    let emb = HashedBagEmbedder::new(256);
    let client = EmbeddingClient::new(
        Arc::new(emb.clone()),
        CheckpointRegistry::new(emb.checkpoints().to_vec())?,
        VectorCache::in_memory(),
        32,
    )?;
    let base = client.registry().base().clone();
    let embeddings = client.embed_batch(&p.corpus.texts(), &base)?;
    let reps = represent_topics(
        &p.corpus,
        &assignment,
        &embeddings,
        &client.at(&base),
        &RepresentationConfig::default(),
    )?;

    let generator = RuleGenerator::demo();
    let namer = TopicNamer::new(&generator);
    for (rep, label) in reps.iter().zip(namer.label_topics(&reps, &p.corpus)?) {
        println!(
            "topic {} ({} docs) {:?}: {}",
            rep.topic_id,
            rep.size,
            label.label,
            rep.keyword_terms().join(", ")
        );
    }
    Ok(())
}
