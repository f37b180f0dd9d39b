use std::path::Path;
use std::process::{Command, Output};

use aham::synthetic::{planted_corpus, PlantedSpec};

fn aham(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aham"))
        .arg("--root")
        .arg(root)
        .args(args)
        .env_remove("AHAM_BACKEND_URL")
        .output()
        .unwrap()
}

fn ok(out: Output) -> String {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn every_subcommand_runs_on_mock_backends() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("c.jsonl");
    planted_corpus(&PlantedSpec::default())
        .corpus
        .write_jsonl(&corpus)
        .unwrap();
    let root = tmp.path().join("runs");
    let mock = ["--backend", "mock", "--mock-dim", "128"];
    fn with<'a>(mock: &[&'a str], extra: &[&'a str]) -> Vec<&'a str> {
        [mock, extra].concat()
    }

    assert!(ok(aham(
        &root,
        &["ingest", "--corpus", corpus.to_str().unwrap(), "--run", "r"]
    ))
    .starts_with("90 documents"));
    let gpl = ok(aham(
        &root,
        &with(
            &mock,
            &[
                "gpl-build",
                "--run",
                "r",
                "--q",
                "2",
                "--nucleus-p",
                "0.9",
                "--pool",
                "10",
                "--seed",
                "42",
            ],
        ),
    ));
    assert_eq!(gpl.trim(), "180 triplets");
    assert!(ok(aham(
        &root,
        &with(&mock, &["model", "--run", "r", "--checkpoint", "0"])
    ))
    .starts_with("step 0: T="));
    let table = ok(aham(
        &root,
        &with(&mock, &["evaluate", "--run", "r", "--metric", "all"]),
    ));
    assert!(table.starts_with("steps\tT\tO\tO/T\tlev\tbert_like\tcos\t"));
    assert_eq!(table.lines().count(), 2);
    assert!(ok(aham(&root, &["select", "--run", "r"])).starts_with("0\tbase"));
    assert_eq!(
        ok(aham(&root, &with(&mock, &["classify", "--run", "r"])))
            .lines()
            .count(),
        90
    );
    assert_eq!(
        ok(aham(&root, &["report", "--run", "r"])).lines().count(),
        3
    );
    for f in [
        "gpl.jsonl",
        "scores.json",
        "report.tsv",
        "trajectory.csv",
        "evolution.json",
        "trend.csv",
    ] {
        assert!(root.join("r").join(f).is_file(), "{f}");
    }
}

#[test]
fn backend_url_env_overrides_the_manifest_endpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("c.jsonl");
    planted_corpus(&PlantedSpec::default())
        .corpus
        .write_jsonl(&corpus)
        .unwrap();
    let root = tmp.path().join("runs");
    ok(aham(
        &root,
        &[
            "ingest",
            "--corpus",
            corpus.to_str().unwrap(),
            "--run",
            "r",
            "--endpoint",
            "http://127.0.0.1:1",
        ],
    ));
    let out = Command::new(env!("CARGO_BIN_EXE_aham"))
        .arg("--root")
        .arg(&root)
        .args(["model", "--run", "r", "--checkpoint", "0"])
        .env("AHAM_BACKEND_URL", "http://127.0.0.1:9")
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("stage embed"), "{err}");
    assert!(err.contains("127.0.0.1:9/checkpoints"), "{err}");
}

#[test]
fn missing_run_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let out = aham(tmp.path(), &["select", "--run", "none"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("ingest"));
}
