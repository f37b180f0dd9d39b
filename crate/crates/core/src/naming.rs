//! Topic labels from a generation backend, and the methodology/application
//! document classifier.
//!
//! Prompts have three parts: a system text, a one-shot worked example and a
//! query. Topic queries carry the `[DOCUMENTS]` and `[KEYWORDS]`
//! placeholders; classification queries carry `[TITLE]`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backends::{generate_text, GenerationBackend, GenerationParams, Prompt};
use crate::corpus::{Corpus, Document};
use crate::error::{Error, Result};
use crate::text;
use crate::topics::TopicRepresentation;

pub const DOCUMENTS_PLACEHOLDER: &str = "[DOCUMENTS]";
pub const KEYWORDS_PLACEHOLDER: &str = "[KEYWORDS]";
pub const TITLE_PLACEHOLDER: &str = "[TITLE]";
pub const OUTLIER_LABEL: &str = "Outliers";
pub const MAX_LABEL_CHARS: usize = 120;
/// Characters of each central document shown in a topic prompt.
pub const DOCUMENT_CHARS: usize = 512;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system: String,
    pub one_shot: String,
    pub query_template: String,
}

impl Default for PromptBundle {
    fn default() -> Self {
        PromptBundle {
            system: include_str!("prompts/topic_system.txt")
                .trim_end()
                .to_string(),
            one_shot: include_str!("prompts/topic_one_shot.txt")
                .trim_end()
                .to_string(),
            query_template: include_str!("prompts/topic_query.txt")
                .trim_end()
                .to_string(),
        }
    }
}

fn check_placeholder(template: &str, placeholder: &str) -> Result<()> {
    match template.matches(placeholder).count() {
        1 => Ok(()),
        n => Err(Error::Template(format!(
            "query template must contain {placeholder} exactly once, found {n}"
        ))),
    }
}

impl PromptBundle {
    pub fn validate(&self) -> Result<()> {
        check_placeholder(&self.query_template, DOCUMENTS_PLACEHOLDER)?;
        check_placeholder(&self.query_template, KEYWORDS_PLACEHOLDER)
    }

    /// Bundle from a JSON file `{"system", "one_shot", "query_template"}`.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let body = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let bundle: PromptBundle = serde_json::from_str(&body)?;
        bundle.validate()?;
        Ok(bundle)
    }
}

/// Prompt for one topic. Central documents become `- ` lines, truncated to
/// [`DOCUMENT_CHARS`]; keywords are comma-joined.
pub fn render_topic_prompt(
    bundle: &PromptBundle,
    rep: &TopicRepresentation,
    corpus: &Corpus,
) -> Result<Prompt> {
    bundle.validate()?;
    if rep.keywords.is_empty() || rep.central_docs.is_empty() {
        return Err(Error::Topic {
            topic_id: rep.topic_id,
            reason: "representation needs at least one keyword and one central document".into(),
        });
    }
    let index = corpus.index();
    let mut documents = String::new();
    for id in &rep.central_docs {
        let i = *index.get(id.as_str()).ok_or_else(|| {
            Error::CorpusMismatch(format!("central document {id:?} is not in the corpus"))
        })?;
        documents.push_str("\n- ");
        documents.push_str(text::truncate_chars(
            &corpus.documents[i].text,
            DOCUMENT_CHARS,
        ));
    }
    let keywords = rep.keyword_terms().join(", ");
    let query = bundle
        .query_template
        .replace(DOCUMENTS_PLACEHOLDER, &documents)
        .replace(KEYWORDS_PLACEHOLDER, &keywords);
    Ok(Prompt {
        system: bundle.system.clone(),
        one_shot: bundle.one_shot.clone(),
        query,
    })
}

const QUOTES: &[char] = &[
    '"', '\'', '`', '\u{201c}', '\u{201d}', '\u{2018}', '\u{2019}',
];
const TRAILING: &[char] = &['.', ',', ';', ':', '!', '?'];

/// First non-empty line with any `Label:` prefix, surrounding quotes,
/// whitespace and trailing punctuation removed, cut to 120 characters.
pub fn sanitize_label(raw: &str) -> Result<String> {
    let line = raw
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .unwrap_or("");
    let mut s = line.to_string();
    loop {
        let before = s.clone();
        let t = s.trim();
        let t = match t.get(..6) {
            Some(p) if p.eq_ignore_ascii_case("label:") => &t[6..],
            _ => t,
        };
        let t = t
            .trim()
            .trim_matches(QUOTES)
            .trim()
            .trim_end_matches(TRAILING);
        s = t.to_string();
        if s == before {
            break;
        }
    }
    let s = text::truncate_chars(&s, MAX_LABEL_CHARS)
        .trim_end()
        .to_string();
    if s.is_empty() {
        return Err(Error::EmptyLabel);
    }
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicLabel {
    pub topic_id: i64,
    pub label: String,
    pub raw_response: String,
}

impl TopicLabel {
    pub fn outliers() -> Self {
        TopicLabel {
            topic_id: -1,
            label: OUTLIER_LABEL.to_string(),
            raw_response: String::new(),
        }
    }
}

/// Generation-backed topic namer.
pub struct TopicNamer<'a> {
    pub backend: &'a dyn GenerationBackend,
    pub bundle: PromptBundle,
    pub params: GenerationParams,
}

impl<'a> TopicNamer<'a> {
    pub fn new(backend: &'a dyn GenerationBackend) -> Self {
        TopicNamer {
            backend,
            bundle: PromptBundle::default(),
            params: GenerationParams::default(),
        }
    }

    /// Label one topic. The outlier topic `-1` is named without a backend
    /// call.
    pub fn label_topic(&self, rep: &TopicRepresentation, corpus: &Corpus) -> Result<TopicLabel> {
        if rep.topic_id < 0 {
            return Ok(TopicLabel::outliers());
        }
        let prompt = render_topic_prompt(&self.bundle, rep, corpus)?;
        let raw = generate_text(self.backend, &prompt, &self.params).map_err(|e| match e {
            Error::EmptyResponse => Error::Topic {
                topic_id: rep.topic_id,
                reason: "empty label".into(),
            },
            other => other,
        })?;
        let label = sanitize_label(&raw).map_err(|_| Error::Topic {
            topic_id: rep.topic_id,
            reason: format!("empty label after sanitizing {raw:?}"),
        })?;
        Ok(TopicLabel {
            topic_id: rep.topic_id,
            label,
            raw_response: raw,
        })
    }

    /// Labels for every topic, in the order given.
    pub fn label_topics(
        &self,
        reps: &[TopicRepresentation],
        corpus: &Corpus,
    ) -> Result<Vec<TopicLabel>> {
        reps.iter().map(|r| self.label_topic(r, corpus)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DocumentClass {
    Methodology,
    Application,
}

impl DocumentClass {
    pub fn name(self) -> &'static str {
        match self {
            DocumentClass::Methodology => "methodology",
            DocumentClass::Application => "application",
        }
    }
}

impl fmt::Display for DocumentClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DocumentClass {
    type Err = Error;

    /// Case-insensitive; `method` is accepted for `methodology` because the
    /// default query asks for it by that name.
    fn from_str(s: &str) -> Result<Self> {
        let s = sanitize_label(s).map_err(|_| Error::Classification(s.to_string()))?;
        let norm = s.trim_matches(QUOTES).to_lowercase();
        match norm.as_str() {
            "methodology" | "method" => Ok(DocumentClass::Methodology),
            "application" => Ok(DocumentClass::Application),
            _ => Err(Error::Classification(s)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassificationBundle {
    pub system: String,
    pub one_shot: String,
    pub query_template: String,
}

impl Default for ClassificationBundle {
    fn default() -> Self {
        ClassificationBundle {
            system: include_str!("prompts/classify_system.txt")
                .trim_end()
                .to_string(),
            one_shot: include_str!("prompts/classify_one_shot.txt")
                .trim_end()
                .to_string(),
            query_template: include_str!("prompts/classify_query.txt")
                .trim_end()
                .to_string(),
        }
    }
}

impl ClassificationBundle {
    pub fn render(&self, doc: &Document) -> Result<Prompt> {
        check_placeholder(&self.query_template, TITLE_PLACEHOLDER)?;
        Ok(Prompt {
            system: self.system.clone(),
            one_shot: self.one_shot.clone(),
            query: self.query_template.replace(TITLE_PLACEHOLDER, &doc.title),
        })
    }
}

/// Classify a document from its title. An unparseable answer is retried
/// once.
pub fn classify_document(
    doc: &Document,
    backend: &dyn GenerationBackend,
    bundle: &ClassificationBundle,
    params: &GenerationParams,
) -> Result<DocumentClass> {
    let prompt = bundle.render(doc)?;
    let mut last = String::new();
    for attempt in 0..2 {
        last = match generate_text(backend, &prompt, params) {
            Ok(r) => r,
            Err(Error::EmptyResponse) => String::new(),
            Err(e) => return Err(e),
        };
        match last.parse() {
            Ok(class) => return Ok(class),
            Err(_) if attempt == 0 => {
                log::debug!("document {}: unparseable class {last:?}, retrying", doc.id)
            }
            Err(_) => {}
        }
    }
    Err(Error::Classification(format!(
        "document {}: {last:?}",
        doc.id
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::mock::RuleGenerator;
    use crate::backends::split_one_shot;

    fn corpus() -> Corpus {
        Corpus::new(
            vec![
                Document::new("a", "Graph mining", Some("Mining graphs at scale."), None),
                Document::new("b", "Text mining", Some(&"long ".repeat(200)), None),
            ],
            "t",
        )
        .unwrap()
    }

    fn rep(id: i64) -> TopicRepresentation {
        TopicRepresentation {
            topic_id: id,
            size: 2,
            keywords: vec![
                ("graph".into(), 0.9),
                ("mining".into(), 0.8),
                ("scale".into(), 0.5),
            ],
            central_docs: vec!["a".into(), "b".into()],
            centroid: vec![],
        }
    }

    #[test]
    fn default_bundle_texts() {
        let b = PromptBundle::default();
        b.validate().unwrap();
        assert_eq!(
            b.system,
            "You are a helpful, respectful, and honest research assistant for labeling topics."
        );
        assert_eq!(
            split_one_shot(&b.one_shot).1,
            Some("Outlier-based knowledge discovery")
        );
    }

    #[test]
    fn rendering_lists_documents_and_keywords() {
        let p = render_topic_prompt(&PromptBundle::default(), &rep(0), &corpus()).unwrap();
        let doc_lines = p.query.lines().filter(|l| l.starts_with("- ")).count();
        assert_eq!(doc_lines, 2);
        assert!(p.query.contains("keywords: graph, mining, scale"));
        // second document is cut at 512 characters
        let long = p.query.lines().find(|l| l.starts_with("- Text")).unwrap();
        assert_eq!(long.chars().count(), 2 + DOCUMENT_CHARS);
        let again = render_topic_prompt(&PromptBundle::default(), &rep(0), &corpus()).unwrap();
        assert_eq!(p, again);
    }

    #[test]
    fn missing_placeholder_is_a_template_error() {
        let b = PromptBundle {
            query_template: "no slots here [KEYWORDS]".into(),
            ..Default::default()
        };
        assert!(matches!(
            render_topic_prompt(&b, &rep(0), &corpus()),
            Err(Error::Template(_))
        ));
    }

    #[test]
    fn sanitizer_examples() {
        assert_eq!(
            sanitize_label("Label: 'Topic Modeling'").unwrap(),
            "Topic Modeling"
        );
        assert_eq!(
            sanitize_label("  BioMed Text Mining\nExplanation: because").unwrap(),
            "BioMed Text Mining"
        );
        assert_eq!(
            sanitize_label(" \"Knowledge Graph Embeddings.\" ").unwrap(),
            "Knowledge Graph Embeddings"
        );
        assert!(sanitize_label("\"\"").is_err());
        assert!(sanitize_label("\n\n").is_err());
        assert_eq!(
            sanitize_label(&"x".repeat(300)).unwrap().len(),
            MAX_LABEL_CHARS
        );
    }

    #[test]
    fn outlier_topic_skips_the_backend() {
        let g = RuleGenerator::fixed("anything");
        let namer = TopicNamer::new(&g);
        let l = namer.label_topic(&rep(-1), &corpus()).unwrap();
        assert_eq!(l.label, OUTLIER_LABEL);
        assert_eq!(g.calls(), 0);
    }

    #[test]
    fn labels_come_from_the_generator() {
        let g = RuleGenerator::echo_first_keyword();
        let l = TopicNamer::new(&g).label_topic(&rep(4), &corpus()).unwrap();
        assert_eq!((l.topic_id, l.label.as_str()), (4, "graph"));

        let blank = RuleGenerator::fixed("  '' ");
        let err = TopicNamer::new(&blank)
            .label_topic(&rep(7), &corpus())
            .unwrap_err();
        assert!(matches!(err, Error::Topic { topic_id: 7, .. }), "{err}");
    }

    #[test]
    fn classification_parsing_and_retry() {
        let doc = Document::new("x", "Fish oil and Raynaud's syndrome", None, Some(1986));
        let bundle = ClassificationBundle::default();
        let params = GenerationParams::default();
        for (answer, want) in [
            ("application", DocumentClass::Application),
            ("Label: 'methodology'", DocumentClass::Methodology),
            ("METHOD", DocumentClass::Methodology),
        ] {
            let g = RuleGenerator::fixed(answer);
            assert_eq!(classify_document(&doc, &g, &bundle, &params).unwrap(), want);
        }

        let flaky = RuleGenerator::cycle(vec!["no idea".into(), "application".into()]);
        assert_eq!(
            classify_document(&doc, &flaky, &bundle, &params).unwrap(),
            DocumentClass::Application
        );
        assert_eq!(flaky.calls(), 2);

        let bad = RuleGenerator::fixed("both");
        assert!(matches!(
            classify_document(&doc, &bad, &bundle, &params),
            Err(Error::Classification(_))
        ));
        assert_eq!(bad.calls(), 2);

        let prompt = bundle.render(&doc).unwrap();
        assert!(prompt.query.contains("Fish oil and Raynaud's syndrome"));
    }
}
