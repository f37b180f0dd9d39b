//! Model one checkpoint against a running model server.
//!
//! cargo run --example http_backend -- http://127.0.0.1:8000 corpus.jsonl [step]

use std::time::Duration;

use aham::backends::http::HttpBackend;
use aham::backends::list_checkpoints;
use aham::runner::{cmd_ingest, cmd_model, Backends, RunManifest};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let (Some(url), Some(corpus)) = (args.next(), args.next()) else {
        eprintln!("usage: http_backend <endpoint> <corpus.jsonl> [step]");
        std::process::exit(2);
    };
    let step: u64 = args.next().map_or(Ok(0), |s| s.parse()).unwrap_or(0);

    for c in list_checkpoints(&HttpBackend::new(&url, Duration::from_secs(10)))? {
        println!(
            "checkpoint {} step {} dim {}",
            c.checkpoint_id, c.step, c.dim
        );
    }
    let tmp = tempfile::tempdir()?;
    let mut manifest = RunManifest::new("http", &corpus);
    manifest.backend.endpoint = url.clone();
    let mut run = cmd_ingest(tmp.path(), manifest)?;
    let model = cmd_model(
        &mut run,
        &Backends::http(&url, Duration::from_secs(60)),
        step,
    )?;
    for (t, label) in model.topic_labels().iter().enumerate() {
        println!("{t}\t{label}");
    }
    Ok(())
}
