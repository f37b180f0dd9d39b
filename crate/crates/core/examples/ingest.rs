//! Ingest a JSONL corpus and print documents per year.
//!
//! cargo run --example ingest [corpus.jsonl]

use aham::corpus::{ingest_corpus, yearly_counts, CorpusFormat};
use aham::synthetic::{planted_corpus, PlantedSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tmp = tempfile::tempdir()?;
    let path = match std::env::args().nth(1) {
        Some(p) => p.into(),
        None => {
            let p = tmp.path().join("planted.jsonl");
            planted_corpus(&PlantedSpec::default())
                .corpus
                .write_jsonl(&p)?;
            p
        }
    };
    let ingest = ingest_corpus(&path, CorpusFormat::from_path(&path))?;
    let corpus = &ingest.corpus;
    println!(
        "{} documents ({} skipped for empty titles), content id {}",
        corpus.len(),
        ingest.skipped_empty_title,
        corpus.content_id()
    );
    println!("first: {}", corpus.documents[0].text);
    for y in yearly_counts(corpus, None).iter().take(5) {
        println!("{}\t{}", y.year, y.count);
    }
    Ok(())
}
