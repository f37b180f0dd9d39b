//! A full run on mock backends: ingest, model two checkpoints, evaluate,
//! select, classify and report. The second checkpoint weights each topic's
//! vocabulary up, as a domain-adapted embedder would.
//!
//! cargo run --example pipeline [run-root]

use aham::backends::mock::{HashedBagEmbedder, RuleGenerator};
use aham::metrics::Metric;
use aham::runner::*;
use aham::synthetic::{planted_corpus, PlantedSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tmp = tempfile::tempdir()?;
    let keep = std::env::args().nth(1);
    let root = keep
        .clone()
        .map_or_else(|| tmp.path().join("runs"), Into::into);
    let p = planted_corpus(&PlantedSpec {
        marker_words: 2,
        filler_words: 10,
        ..Default::default()
    });
    let corpus = tmp.path().join("corpus.jsonl");
    p.corpus.write_jsonl(&corpus)?;

    let emb =
        HashedBagEmbedder::new(256).with_checkpoint("adapted", 10_000, p.adapted_weights(3.0, 0.2));
    let backends = Backends::mock(emb, RuleGenerator::demo());
    let mut run = cmd_ingest(&root, RunManifest::new("demo", &corpus))?;
    for step in [0, 10_000] {
        let model = cmd_model(&mut run, &backends, step)?;
        println!(
            "step {step}: T={} O={} {:?}",
            model.assignment.n_topics,
            model.assignment.outliers,
            model.topic_labels()
        );
    }

    let eval = cmd_evaluate(&run, &backends, &Metric::ALL)?;
    print!("{}", report::render_tsv(&eval.scores, eval.selected_step));
    let best = cmd_select(&run)?;
    println!(
        "selected {} (step {})",
        best.checkpoint.checkpoint_id, best.checkpoint.step
    );

    let classes = cmd_classify(&run, &backends)?;
    let methods = classes
        .iter()
        .filter(|c| c.class.to_string() == "methodology")
        .count();
    println!(
        "{methods} of {} documents classified as methodology",
        classes.len()
    );

    let files = cmd_report(&run)?;
    println!(
        "{}",
        std::fs::read_to_string(&files.evolution)?
            .lines()
            .take(12)
            .collect::<Vec<_>>()
            .join("\n")
    );
    if keep.is_some() {
        println!("artifacts in {}", run.store.dir().display());
    }
    Ok(())
}
