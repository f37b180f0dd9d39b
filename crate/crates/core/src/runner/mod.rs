//! Run orchestration: ingest, GPL data, per-checkpoint topic models,
//! evaluation, selection, classification and reports, all persisted under a
//! [`RunStore`].

pub mod report;
pub mod store;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::backends::http::HttpBackend;
use crate::backends::mock::{HashedBagEmbedder, RuleGenerator, TokenOverlapCrossEncoder};
use crate::backends::{
    list_checkpoints, CheckpointRegistry, CheckpointSource, CrossEncoderBackend, EmbeddingBackend,
    EmbeddingCheckpoint, EmbeddingClient, GenerationBackend, TextEmbedder, VectorCache,
};
use crate::binfmt::encode_matrix;
use crate::cluster::{cluster, Assignment, OUTLIER};
use crate::corpus::{ingest_corpus, yearly_counts, Corpus, CorpusFormat};
use crate::error::{Error, Result};
use crate::gpl::{build_gpl_dataset, GplBackends, GplConfig, GplDataset};
use crate::metrics::{aham_objective, select_best_checkpoint, AhamScore, Metric};
use crate::naming::{
    classify_document, ClassificationBundle, DocumentClass, PromptBundle, TopicLabel, TopicNamer,
    OUTLIER_LABEL,
};
use crate::reduce::fit_reduce;
use crate::topics::{ctfidf_weights, represent_topics, TopicRepresentation};

pub use report::{topic_evolution_map, EvolutionEdge, TopicRef};
pub use store::{RunManifest, RunStore, BACKEND_URL_ENV, DEFAULT_SEED};

use store::*;

/// The model services a run talks to.
#[derive(Clone)]
pub struct Backends {
    pub embedder: Arc<dyn EmbeddingBackend>,
    pub checkpoints: Arc<dyn CheckpointSource>,
    pub generator: Arc<dyn GenerationBackend>,
    pub cross_encoder: Arc<dyn CrossEncoderBackend>,
}

impl Backends {
    /// All four capabilities from one model server.
    pub fn http(endpoint: &str, timeout: Duration) -> Self {
        let h = Arc::new(HttpBackend::new(endpoint, timeout));
        Backends {
            embedder: h.clone(),
            checkpoints: h.clone(),
            generator: h.clone(),
            cross_encoder: h,
        }
    }

    /// In-process mocks with the token-overlap cross-encoder.
    pub fn mock(embedder: HashedBagEmbedder, generator: RuleGenerator) -> Self {
        let e = Arc::new(embedder);
        Backends {
            embedder: e.clone(),
            checkpoints: e,
            generator: Arc::new(generator),
            cross_encoder: Arc::new(TokenOverlapCrossEncoder),
        }
    }

    pub fn registry(&self) -> Result<CheckpointRegistry> {
        CheckpointRegistry::new(list_checkpoints(self.checkpoints.as_ref())?)
    }
}

/// One checkpoint's topic model, as persisted under `ckpt_<step>/`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicModel {
    pub checkpoint: EmbeddingCheckpoint,
    pub corpus_id: String,
    pub assignment: Assignment,
    pub topics: Vec<TopicRepresentation>,
    /// Labels of topics `0..T`, preceded by the outlier label when there are
    /// outliers.
    pub labels: Vec<TopicLabel>,
}

impl TopicModel {
    pub fn degenerate(&self) -> bool {
        self.assignment.degenerate
    }

    /// Labels of topics `0..T` in order, outliers excluded.
    pub fn topic_labels(&self) -> Vec<String> {
        (0..self.assignment.n_topics as i64)
            .map(|t| self.label_of(t))
            .collect()
    }

    pub fn label_of(&self, topic_id: i64) -> String {
        if topic_id == OUTLIER {
            return OUTLIER_LABEL.to_string();
        }
        self.labels
            .iter()
            .find(|l| l.topic_id == topic_id)
            .map(|l| l.label.clone())
            .unwrap_or_else(|| format!("topic {topic_id}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CheckpointMeta {
    checkpoint: EmbeddingCheckpoint,
    corpus_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CtfIdfTopic {
    topic_id: i64,
    terms: Vec<(String, f64)>,
}

/// An opened run: its store and manifest.
#[derive(Debug, Clone)]
pub struct Run {
    pub store: RunStore,
    pub manifest: RunManifest,
}

impl Run {
    pub fn open(root: impl AsRef<Path>, run_id: &str) -> Result<Run> {
        let store = RunStore::new(root, run_id);
        let manifest = store.read_manifest()?;
        Ok(Run { store, manifest })
    }

    /// The ingested corpus (`corpus.jsonl`).
    pub fn corpus(&self) -> Result<Corpus> {
        let path = self.store.path(CORPUS);
        Ok(ingest_corpus(&path, CorpusFormat::Jsonl)?.corpus)
    }

    /// Embedding client with the run's on-disk vector cache.
    pub fn embedding_client(
        &self,
        backends: &Backends,
        registry: CheckpointRegistry,
    ) -> Result<EmbeddingClient> {
        let cache_dir = self
            .manifest
            .backend
            .cache_dir
            .clone()
            .unwrap_or_else(|| self.store.path("cache"));
        EmbeddingClient::new(
            backends.embedder.clone(),
            registry,
            VectorCache::on_disk(cache_dir)?,
            self.manifest.backend.batch_size,
        )
    }

    pub fn modeled_steps(&self) -> Result<Vec<u64>> {
        self.store.modeled_steps()
    }

    pub fn load_model(&self, step: u64) -> Result<TopicModel> {
        let at = |name| self.store.checkpoint_path(step, name);
        if !at(CHECKPOINT).is_file() {
            return Err(Error::Store(format!(
                "checkpoint step {step} has not been modeled"
            )));
        }
        let meta: CheckpointMeta = self.store.read_json(&at(CHECKPOINT))?;
        Ok(TopicModel {
            checkpoint: meta.checkpoint,
            corpus_id: meta.corpus_id,
            assignment: self.store.read_json(&at(ASSIGNMENT))?,
            topics: self.store.read_json(&at(TOPICS))?,
            labels: self.store.read_json(&at(LABELS))?,
        })
    }

    pub fn gpl_dataset(&self) -> Result<GplDataset> {
        GplDataset::read(self.store.path(GPL))
    }

    pub fn evaluation(&self) -> Result<Evaluation> {
        let path = self.store.path(SCORES);
        if !path.is_file() {
            return Err(Error::Store("no scores yet (run `evaluate` first)".into()));
        }
        self.store.read_json(&path)
    }
}

/// Create a run: validate the manifest, ingest `manifest.corpus_path` and
/// store the canonical corpus. Ingesting the same corpus into an existing run
/// is a no-op that returns the stored run.
pub fn cmd_ingest(root: impl AsRef<Path>, manifest: RunManifest) -> Result<Run> {
    manifest.validate()?;
    let store = RunStore::new(root, &manifest.run_id);
    let ingest = ingest_corpus(
        &manifest.corpus_path,
        CorpusFormat::from_path(&manifest.corpus_path),
    )?;
    let body = ingest.corpus.to_jsonl();
    if store.exists(MANIFEST) {
        store.put_once(&store.path(CORPUS), body.as_bytes())?;
        return Ok(Run {
            manifest: store.read_manifest()?,
            store,
        });
    }
    store.put_once(&store.path(CORPUS), body.as_bytes())?;
    store.write_manifest(&manifest)?;
    log::info!(
        "ingested {} documents ({} skipped) into {}",
        ingest.corpus.len(),
        ingest.skipped_empty_title,
        store.dir().display()
    );
    Ok(Run { store, manifest })
}

/// Build `gpl.jsonl` from the run corpus with base-checkpoint negatives.
/// A backend failure leaves the triplets built so far in
/// `gpl.partial.jsonl`.
pub fn cmd_gpl_build(run: &Run, backends: &Backends, config: &GplConfig) -> Result<GplDataset> {
    let corpus = run.corpus()?;
    let registry = backends.registry()?;
    let base = registry.base().clone();
    let client = run.embedding_client(backends, registry)?;
    let embedder = client.at(&base);
    let gpl_backends = GplBackends {
        generator: backends.generator.as_ref(),
        base: &embedder,
        cross_encoder: backends.cross_encoder.as_ref(),
        params: run.manifest.generation,
    };
    let partial = run.store.path(GPL_PARTIAL);
    let dataset = build_gpl_dataset(&corpus, config, &gpl_backends, Some(&partial))?;
    run.store
        .put_once(&run.store.path(GPL), dataset.to_jsonl().as_bytes())?;
    Ok(dataset)
}

/// Embed, reduce, cluster, represent and name the corpus at the checkpoint
/// with `step`. A checkpoint that is already complete is loaded, not redone.
/// A corpus smaller than `min_cluster_size` gives an all-outlier model
/// flagged degenerate.
pub fn cmd_model(run: &mut Run, backends: &Backends, step: u64) -> Result<TopicModel> {
    if run.store.checkpoint_path(step, CHECKPOINT).is_file() {
        return run.load_model(step);
    }
    let corpus = run.corpus()?;
    let store = run.store.clone();
    let at = |name| store.checkpoint_path(step, name);
    let manifest = &run.manifest;

    let registry = backends.registry().map_err(|e| e.in_stage("embed"))?;
    let checkpoint = registry
        .by_step(step)
        .cloned()
        .ok_or_else(|| Error::UnknownCheckpoint(format!("step {step}")).in_stage("embed"))?;
    let client = run.embedding_client(backends, registry)?;
    let embeddings = client
        .embed_batch(&corpus.texts(), &checkpoint)
        .map_err(|e| e.in_stage("embed"))?;
    store.put_once(&at(EMBEDDINGS), &encode_matrix(&embeddings))?;

    let assignment = if corpus.len() < manifest.clusterer.min_cluster_size {
        log::warn!(
            "{} documents < min_cluster_size {}; model is all outliers",
            corpus.len(),
            manifest.clusterer.min_cluster_size
        );
        Assignment::all_outliers(corpus.len())
    } else {
        let reduced =
            fit_reduce(&embeddings, &manifest.reducer).map_err(|e| e.in_stage("reduce"))?;
        store.put_once(&at(REDUCED), &encode_matrix(&reduced))?;
        cluster(&reduced, &manifest.clusterer).map_err(|e| e.in_stage("cluster"))?
    };
    store.put_once(&at(ASSIGNMENT), &to_json_bytes(&assignment)?)?;

    let embedder = client.at(&checkpoint);
    let (ctfidf, topics) = if assignment.n_topics == 0 {
        (Vec::new(), Vec::new())
    } else {
        let represent = || -> Result<_> {
            let weights = ctfidf_weights(&corpus, &assignment)?;
            let ctfidf: Vec<CtfIdfTopic> = (0..assignment.n_topics)
                .map(|t| CtfIdfTopic {
                    topic_id: t as i64,
                    terms: weights.top_terms(t, manifest.representation.max_keywords),
                })
                .collect();
            let topics = represent_topics(
                &corpus,
                &assignment,
                &embeddings,
                &embedder,
                &manifest.representation,
            )?;
            Ok((ctfidf, topics))
        };
        represent().map_err(|e| e.in_stage("represent"))?
    };
    store.put_once(&at(CTFIDF), &to_json_bytes(&ctfidf)?)?;
    store.put_once(&at(TOPICS), &to_json_bytes(&topics)?)?;

    let name = || -> Result<Vec<TopicLabel>> {
        let bundle = match &manifest.prompt_bundle {
            Some(p) => PromptBundle::from_file(p)?,
            None => PromptBundle::default(),
        };
        let namer = TopicNamer {
            backend: backends.generator.as_ref(),
            bundle,
            params: manifest.generation,
        };
        let mut labels = namer.label_topics(&topics, &corpus)?;
        if assignment.outliers > 0 {
            labels.insert(0, TopicLabel::outliers());
        }
        Ok(labels)
    };
    let labels = name().map_err(|e| e.in_stage("name"))?;
    store.put_once(&at(LABELS), &to_json_bytes(&labels)?)?;

    let meta = CheckpointMeta {
        checkpoint: checkpoint.clone(),
        corpus_id: corpus.content_id(),
    };
    store.put_once(&at(CHECKPOINT), &to_json_bytes(&meta)?)?;

    // re-read so a concurrent model of another checkpoint is not lost
    let mut latest = store.read_manifest()?;
    if latest.record_checkpoint(&checkpoint) {
        store.write_manifest(&latest)?;
    }
    run.manifest = latest;

    Ok(TopicModel {
        checkpoint,
        corpus_id: meta.corpus_id,
        assignment,
        topics,
        labels,
    })
}

/// Scores of every modeled checkpoint, persisted as `scores.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub metrics: Vec<Metric>,
    pub selection_metric: Metric,
    /// `None` when every checkpoint is degenerate.
    pub selected_step: Option<u64>,
    /// Ascending by step.
    pub scores: Vec<AhamScore>,
}

impl Evaluation {
    pub fn selected(&self) -> Option<&AhamScore> {
        let step = self.selected_step?;
        self.scores.iter().find(|s| s.checkpoint.step == step)
    }
}

/// The metric selection uses: the only one requested, else label cosine
/// when requested, else the first.
pub fn selection_metric(metrics: &[Metric]) -> Metric {
    match metrics {
        [only] => *only,
        _ if metrics.contains(&Metric::LabelCosine) => Metric::LabelCosine,
        [first, ..] => *first,
        [] => Metric::default(),
    }
}

/// Score every modeled checkpoint under `metrics` and select the argmin.
/// Label embeddings come from the base checkpoint so that similarities are
/// comparable across checkpoints. Writes `scores.json`, `report.tsv` and
/// `trajectory.csv`.
pub fn cmd_evaluate(run: &Run, backends: &Backends, metrics: &[Metric]) -> Result<Evaluation> {
    if metrics.is_empty() {
        return Err(Error::InvalidParameter("no metrics requested".into()));
    }
    let steps = run.modeled_steps()?;
    if steps.is_empty() {
        return Err(Error::Store(
            "no modeled checkpoints (run `model` first)".into(),
        ));
    }
    let client = if metrics.iter().any(|m| m.needs_embeddings()) {
        let registry = backends.registry()?;
        Some(run.embedding_client(backends, registry)?)
    } else {
        None
    };
    let base = client.as_ref().map(|c| c.registry().base().clone());
    let embedder = client.as_ref().zip(base.as_ref()).map(|(c, b)| c.at(b));

    let mut scores = Vec::with_capacity(steps.len());
    for step in steps {
        let model = run.load_model(step)?;
        scores.push(aham_objective(
            &model.assignment,
            &model.topic_labels(),
            metrics,
            &model.checkpoint,
            embedder.as_ref().map(|e| e as &dyn TextEmbedder),
        )?);
    }
    let metric = selection_metric(metrics);
    let selected_step = match select_best_checkpoint(&scores, metric) {
        Ok(s) => Some(s.checkpoint.step),
        Err(e) => {
            log::warn!("no checkpoint selected: {e}");
            None
        }
    };
    let evaluation = Evaluation {
        metrics: metrics.to_vec(),
        selection_metric: metric,
        selected_step,
        scores,
    };
    run.store
        .put(&run.store.path(SCORES), &to_json_bytes(&evaluation)?)?;
    write_tables(run, &evaluation)?;
    Ok(evaluation)
}

/// The selected checkpoint's score, re-derived from `scores.json`.
pub fn cmd_select(run: &Run) -> Result<AhamScore> {
    let evaluation = run.evaluation()?;
    select_best_checkpoint(&evaluation.scores, evaluation.selection_metric).cloned()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentClassification {
    pub id: String,
    pub class: DocumentClass,
}

/// Classify every document and write `classes.json` and the per-year,
/// per-class `trend.csv`.
pub fn cmd_classify(run: &Run, backends: &Backends) -> Result<Vec<DocumentClassification>> {
    let corpus = run.corpus()?;
    let bundle = ClassificationBundle::default();
    let classes = corpus
        .documents
        .iter()
        .map(|d| {
            classify_document(
                d,
                backends.generator.as_ref(),
                &bundle,
                &run.manifest.generation,
            )
            .map(|class| DocumentClassification {
                id: d.id.clone(),
                class,
            })
            .map_err(|e| match e {
                e @ Error::Classification(_) => e,
                other => Error::Document {
                    id: d.id.clone(),
                    source: Box::new(other),
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let by_id: HashMap<String, String> = classes
        .iter()
        .map(|c| (c.id.clone(), c.class.name().to_string()))
        .collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["year", "class", "count"])?;
    for row in yearly_counts(&corpus, Some(&by_id)) {
        w.serialize((row.year, row.class, row.count))?;
    }
    let trend = w
        .into_inner()
        .map_err(|e| Error::Store(format!("trend csv: {e}")))?;
    run.store
        .put(&run.store.path(CLASSES), &to_json_bytes(&classes)?)?;
    run.store.put(&run.store.path(TREND), &trend)?;
    Ok(classes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionReport {
    pub from_step: u64,
    pub to_step: u64,
    pub edges: Vec<EvolutionEdge>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportFiles {
    pub table: PathBuf,
    pub trajectory: PathBuf,
    pub evolution: PathBuf,
}

fn write_tables(run: &Run, evaluation: &Evaluation) -> Result<()> {
    let tsv = report::render_tsv(&evaluation.scores, evaluation.selected_step);
    run.store.put(&run.store.path(REPORT), tsv.as_bytes())?;
    let trajectory = report::render_trajectory(&evaluation.scores)?;
    run.store
        .put(&run.store.path(TRAJECTORY), trajectory.as_bytes())
}

/// Re-derive `report.tsv` and `trajectory.csv` from `scores.json`, and write
/// `evolution.json` from the first checkpoint to the selected one (the last
/// one when nothing was selected).
pub fn cmd_report(run: &Run) -> Result<ReportFiles> {
    let evaluation = run.evaluation()?;
    write_tables(run, &evaluation)?;
    let first = evaluation
        .scores
        .first()
        .ok_or_else(|| Error::Store("scores.json has no checkpoints".into()))?
        .checkpoint
        .step;
    let to = evaluation
        .selected_step
        .unwrap_or_else(|| evaluation.scores.last().expect("non-empty").checkpoint.step);
    let edges = topic_evolution_map(&run.load_model(first)?, &run.load_model(to)?)?;
    let evolution = EvolutionReport {
        from_step: first,
        to_step: to,
        edges,
    };
    run.store
        .put(&run.store.path(EVOLUTION), &to_json_bytes(&evolution)?)?;
    Ok(ReportFiles {
        table: run.store.path(REPORT),
        trajectory: run.store.path(TRAJECTORY),
        evolution: run.store.path(EVOLUTION),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selection_metric_prefers_cosine() {
        assert_eq!(
            selection_metric(&[Metric::Levenshtein]),
            Metric::Levenshtein
        );
        assert_eq!(selection_metric(&Metric::ALL), Metric::LabelCosine);
        assert_eq!(
            selection_metric(&[Metric::Levenshtein, Metric::GreedySemantic]),
            Metric::Levenshtein
        );
    }
}
