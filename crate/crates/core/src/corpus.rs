//! Document collection: ingest, normalization, persistence and per-year counts.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::text;

/// Earliest accepted publication year.
pub const MIN_YEAR: i32 = 1900;

/// One publication record.
///
/// `text` is derived: title, a single space, abstract. The separator is
/// dropped when the abstract is empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub year: Option<i32>,
    #[serde(skip)]
    pub text: String,
}

impl Document {
    pub fn new(
        id: impl Into<String>,
        title: &str,
        abstract_text: Option<&str>,
        year: Option<i32>,
    ) -> Self {
        let title = text::normalize(title);
        let abstract_text = abstract_text.map(text::normalize).unwrap_or_default();
        let text = if abstract_text.is_empty() {
            title.clone()
        } else {
            format!("{title} {abstract_text}")
        };
        Document {
            id: id.into(),
            title,
            abstract_text,
            year,
            text,
        }
    }
}

/// Ordered collection of documents. Row `i` of every embedding matrix built
/// from this corpus belongs to `documents[i]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub source_path: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    Jsonl,
    Csv,
}

impl CorpusFormat {
    /// Guess from the file extension; anything that is not `.csv` is JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => CorpusFormat::Csv,
            _ => CorpusFormat::Jsonl,
        }
    }
}

/// Result of ingesting a file.
#[derive(Debug, Clone)]
pub struct Ingest {
    pub corpus: Corpus,
    /// Records dropped because their title was empty.
    pub skipped_empty_title: usize,
}

#[derive(Debug, Deserialize)]
struct RawRecord {
    id: String,
    title: Option<String>,
    #[serde(rename = "abstract", default)]
    abstract_text: Option<String>,
    #[serde(default)]
    year: Option<i64>,
}

pub fn ingest_corpus(path: impl AsRef<Path>, format: CorpusFormat) -> Result<Ingest> {
    let path = path.as_ref();
    let records = match format {
        CorpusFormat::Jsonl => read_jsonl(path)?,
        CorpusFormat::Csv => read_csv(path)?,
    };
    if records.is_empty() {
        return Err(Error::EmptyCorpus);
    }

    let mut documents = Vec::with_capacity(records.len());
    let mut skipped = 0;
    for (line, rec) in records {
        let title = rec
            .title
            .as_deref()
            .map(text::normalize)
            .unwrap_or_default();
        if title.is_empty() {
            skipped += 1;
            continue;
        }
        let year = match rec.year {
            None => None,
            Some(y) if y >= i64::from(MIN_YEAR) && y <= i64::from(i32::MAX) => Some(y as i32),
            Some(y) => {
                return Err(Error::MalformedRecord {
                    line,
                    reason: format!("year {y} is before {MIN_YEAR}"),
                })
            }
        };
        documents.push(Document::new(
            rec.id,
            &title,
            rec.abstract_text.as_deref(),
            year,
        ));
    }
    if skipped > 0 {
        log::warn!("skipped {skipped} record(s) with an empty title");
    }

    let corpus = Corpus::new(documents, path.display().to_string())?;
    Ok(Ingest {
        corpus,
        skipped_empty_title: skipped,
    })
}

fn read_jsonl(path: &Path) -> Result<Vec<(usize, RawRecord)>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RawRecord = serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
            line: line_no,
            reason: e.to_string(),
        })?;
        out.push((line_no, rec));
    }
    Ok(out)
}

fn read_csv(path: &Path) -> Result<Vec<(usize, RawRecord)>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(file);
    let headers: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_ascii_lowercase())
        .collect();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (id_col, title_col) = match (col("id"), col("title")) {
        (Some(i), Some(t)) => (i, t),
        _ => {
            return Err(Error::MalformedRecord {
                line: 1,
                reason: "header must contain id and title columns".into(),
            })
        }
    };
    let abstract_col = col("abstract");
    let year_col = col("year");

    let mut out = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let field = |c: Option<usize>| {
            c.and_then(|c| row.get(c))
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_string)
        };
        let id = field(Some(id_col)).ok_or_else(|| Error::MalformedRecord {
            line,
            reason: "missing id".into(),
        })?;
        let year = match field(year_col) {
            None => None,
            Some(y) => Some(y.parse::<i64>().map_err(|_| Error::MalformedRecord {
                line,
                reason: format!("year {y:?} is not an integer"),
            })?),
        };
        out.push((
            line,
            RawRecord {
                id,
                title: field(Some(title_col)),
                abstract_text: field(abstract_col),
                year,
            },
        ));
    }
    Ok(out)
}

impl Corpus {
    /// Build a corpus, rejecting duplicate ids and empty input.
    pub fn new(documents: Vec<Document>, source_path: impl Into<String>) -> Result<Self> {
        if documents.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut seen = HashSet::with_capacity(documents.len());
        for d in &documents {
            if !seen.insert(d.id.as_str()) {
                return Err(Error::DuplicateId(d.id.clone()));
            }
        }
        Ok(Corpus {
            documents,
            source_path: source_path.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn texts(&self) -> Vec<String> {
        self.documents.iter().map(|d| d.text.clone()).collect()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.documents.iter().position(|d| d.id == id)
    }

    pub fn index(&self) -> HashMap<&str, usize> {
        self.documents
            .iter()
            .enumerate()
            .map(|(i, d)| (d.id.as_str(), i))
            .collect()
    }

    /// Canonical JSONL serialization (the run-store `corpus.jsonl`).
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for d in &self.documents {
            let line = serde_json::json!({
                "id": d.id,
                "title": d.title,
                "abstract": if d.abstract_text.is_empty() { None } else { Some(&d.abstract_text) },
                "year": d.year,
            });
            out.push_str(&line.to_string());
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_jsonl().as_bytes())
            .map_err(|e| Error::io(path, e))
    }

    /// Short content hash identifying this corpus.
    pub fn content_id(&self) -> String {
        let digest = Sha256::digest(self.to_jsonl().as_bytes());
        hex::encode(&digest[..8])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct YearCount {
    pub year: i32,
    pub class: String,
    pub count: usize,
}

/// Documents per (year, class), ascending by year then class.
///
/// Without labels (or with an empty map) every document falls in class `all`;
/// with labels, documents missing from the map fall in `unlabeled`. Documents
/// without a year are not counted.
pub fn yearly_counts(corpus: &Corpus, labels: Option<&HashMap<String, String>>) -> Vec<YearCount> {
    let labels = labels.filter(|m| !m.is_empty());
    let mut counts: BTreeMap<(i32, String), usize> = BTreeMap::new();
    for d in &corpus.documents {
        let Some(year) = d.year else { continue };
        let class = match labels {
            None => "all".to_string(),
            Some(m) => m.get(&d.id).cloned().unwrap_or_else(|| "unlabeled".into()),
        };
        *counts.entry((year, class)).or_default() += 1;
    }
    counts
        .into_iter()
        .map(|((year, class), count)| YearCount { year, class, count })
        .collect()
}
