//! Outlier ratios, label similarities and checkpoint selection on hand-made
//! scores.

use std::collections::BTreeMap;

use std::sync::Arc;

use aham::backends::mock::HashedBagEmbedder;
use aham::backends::{CheckpointRegistry, EmbeddingCheckpoint, EmbeddingClient, VectorCache};
use aham::metrics::*;

fn main() -> aham::Result<()> {
    for (o, t) in [(43, 15), (5, 19), (12, 11)] {
        println!("O={o} T={t} ratio {:.2}", ratio(o, t)?);
    }
    println!("43 -> 5 outliers: {:.1}% fewer", reduction_percent(43, 5));

    let labels: Vec<String> = [
        "Outlier Detection",
        "Outlier Mining",
        "Anomaly Detection Methods",
    ]
    .map(String::from)
    .to_vec();
    let emb = HashedBagEmbedder::new(128);
    let registry = CheckpointRegistry::new(emb.checkpoints().to_vec())?;
    let client = EmbeddingClient::new(Arc::new(emb), registry, VectorCache::in_memory(), 32)?;
    let base = client.registry().base().clone();
    let embedder = client.at(&base);
    for m in Metric::ALL {
        let s = mean_pairwise_similarity(&labels, m, Some(&embedder))?;
        println!("{:<10} {s:.3}", m.name());
    }

    let score = |step, t, o, cos| {
        AhamScore::from_parts(
            EmbeddingCheckpoint::new(format!("s{step}"), step, 128),
            t,
            o,
            BTreeMap::from([(Metric::LabelCosine, cos)]),
        )
    };
    let scores = [
        score(0, 15, 43, 0.25),
        score(10_000, 12, 11, 0.31),
        score(20_000, 1, 80, 0.0),
    ];
    for s in &scores {
        println!(
            "step {:>5}: objective {}",
            s.checkpoint.step,
            s.objective(Metric::LabelCosine)
        );
    }
    let best = select_best_checkpoint(&scores, Metric::LabelCosine)?;
    println!("selected step {}", best.checkpoint.step);
    Ok(())
}
