use std::fmt::Write as _;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use aham::backends::mock::{HashedBagEmbedder, RuleGenerator};
use aham::gpl::GplConfig;
use aham::metrics::Metric;
use aham::runner::{self, Backends, Run, RunManifest};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "aham", version, about = "Adaptation-aware topic modeling runs")]
struct Cli {
    /// Directory holding the runs.
    #[arg(long, global = true, default_value = "runs")]
    root: PathBuf,
    /// Backend kind; `http` talks to the manifest endpoint or AHAM_BACKEND_URL.
    #[arg(long, global = true, value_enum, default_value_t = BackendKind::Http)]
    backend: BackendKind,
    /// Width of the mock embedder.
    #[arg(long, global = true, default_value_t = 256)]
    mock_dim: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendKind {
    Http,
    Mock,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Cos,
    Lev,
    Bert,
    All,
}

impl MetricArg {
    fn metrics(self) -> Vec<Metric> {
        match self {
            MetricArg::Cos => vec![Metric::LabelCosine],
            MetricArg::Lev => vec![Metric::Levenshtein],
            MetricArg::Bert => vec![Metric::GreedySemantic],
            MetricArg::All => Metric::ALL.to_vec(),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Create a run from a JSONL or CSV corpus.
    Ingest {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        run: String,
        #[arg(long, default_value_t = runner::DEFAULT_SEED)]
        seed: u64,
        /// Model server endpoint recorded in the manifest.
        #[arg(long)]
        endpoint: Option<String>,
        /// JSON prompt bundle replacing the built-in topic prompt.
        #[arg(long)]
        prompt_bundle: Option<PathBuf>,
        #[arg(long)]
        min_cluster_size: Option<usize>,
    },
    /// Build the GPL triplet file.
    GplBuild {
        #[arg(long)]
        run: String,
        #[arg(long, default_value_t = 3)]
        q: usize,
        #[arg(long, default_value_t = 0.9)]
        nucleus_p: f64,
        #[arg(long, default_value_t = 50)]
        pool: usize,
        #[arg(long, default_value_t = runner::DEFAULT_SEED)]
        seed: u64,
    },
    /// Topic model at one checkpoint.
    Model {
        #[arg(long)]
        run: String,
        #[arg(long)]
        checkpoint: u64,
    },
    /// Score every modeled checkpoint.
    Evaluate {
        #[arg(long)]
        run: String,
        #[arg(long, value_enum, default_value_t = MetricArg::Cos)]
        metric: MetricArg,
    },
    /// Print the selected checkpoint.
    Select {
        #[arg(long)]
        run: String,
    },
    /// Methodology/application class per document and the yearly trend.
    Classify {
        #[arg(long)]
        run: String,
    },
    /// Write report.tsv, trajectory.csv and evolution.json.
    Report {
        #[arg(long)]
        run: String,
    },
}

fn backends(kind: BackendKind, mock_dim: usize, manifest: &RunManifest) -> Backends {
    match kind {
        BackendKind::Http => {
            Backends::http(&manifest.effective_endpoint(), manifest.backend.timeout)
        }
        BackendKind::Mock => {
            Backends::mock(HashedBagEmbedder::new(mock_dim), RuleGenerator::demo())
        }
    }
}

/// Runs one command and returns what it prints.
fn run(cli: Cli) -> aham::Result<String> {
    let mut out = String::new();
    let open = |id: &str| Run::open(&cli.root, id);
    match cli.command {
        Command::Ingest {
            corpus,
            run,
            seed,
            endpoint,
            prompt_bundle,
            min_cluster_size,
        } => {
            let mut manifest = RunManifest::new(run, corpus).with_seed(seed);
            if let Some(e) = endpoint {
                manifest.backend.endpoint = e;
            }
            if let Some(mcs) = min_cluster_size {
                manifest.clusterer.min_cluster_size = mcs;
            }
            manifest.prompt_bundle = prompt_bundle;
            let run = runner::cmd_ingest(&cli.root, manifest)?;
            let _ = writeln!(
                out,
                "{} documents in {}",
                run.corpus()?.len(),
                run.store.dir().display()
            );
        }
        Command::GplBuild {
            run,
            q,
            nucleus_p,
            pool,
            seed,
        } => {
            let run = open(&run)?;
            let config = GplConfig {
                q,
                nucleus_p,
                pool_size: pool,
                seed,
            };
            let b = backends(cli.backend, cli.mock_dim, &run.manifest);
            let ds = runner::cmd_gpl_build(&run, &b, &config)?;
            let _ = writeln!(out, "{} triplets", ds.triplets.len());
        }
        Command::Model { run, checkpoint } => {
            let mut run = open(&run)?;
            let b = backends(cli.backend, cli.mock_dim, &run.manifest);
            let model = runner::cmd_model(&mut run, &b, checkpoint)?;
            let _ = writeln!(
                out,
                "step {}: T={} O={}{}",
                checkpoint,
                model.assignment.n_topics,
                model.assignment.outliers,
                if model.degenerate() {
                    " (degenerate)"
                } else {
                    ""
                }
            );
            for (t, label) in model.topic_labels().iter().enumerate() {
                let _ = writeln!(out, "{t}\t{label}");
            }
        }
        Command::Evaluate { run, metric } => {
            let run = open(&run)?;
            let b = backends(cli.backend, cli.mock_dim, &run.manifest);
            let eval = runner::cmd_evaluate(&run, &b, &metric.metrics())?;
            out.push_str(&runner::report::render_tsv(
                &eval.scores,
                eval.selected_step,
            ));
        }
        Command::Select { run } => {
            let best = runner::cmd_select(&open(&run)?)?;
            let _ = writeln!(
                out,
                "{}\t{}",
                best.checkpoint.step, best.checkpoint.checkpoint_id
            );
        }
        Command::Classify { run } => {
            let run = open(&run)?;
            let b = backends(cli.backend, cli.mock_dim, &run.manifest);
            for c in runner::cmd_classify(&run, &b)? {
                let _ = writeln!(out, "{}\t{}", c.id, c.class);
            }
        }
        Command::Report { run } => {
            let files = runner::cmd_report(&open(&run)?)?;
            for p in [files.table, files.trajectory, files.evolution] {
                let _ = writeln!(out, "{}", p.display());
            }
        }
    }
    Ok(out)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(out) => {
            // a closed pipe (`aham ... | head`) is not an error
            let _ = std::io::stdout().write_all(out.as_bytes());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
