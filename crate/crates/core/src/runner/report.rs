//! Tables and plot data derived from persisted scores and models.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::TopicModel;
use crate::cluster::OUTLIER;
use crate::error::{Error, Result};
use crate::metrics::{AhamScore, Metric};

pub const TSV_COLUMNS: [&str; 11] = [
    "steps",
    "T",
    "O",
    "O/T",
    "lev",
    "bert_like",
    "cos",
    "objective_lev",
    "objective_bert",
    "objective_cos",
    "selected",
];

pub const SELECTED_MARKER: &str = "*";

fn two_decimals(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x:.2}"),
        Some(x) if x > 0.0 => "inf".into(),
        _ => "NA".into(),
    }
}

/// One table row; similarities and ratios to two decimals, `NA` when not
/// computed, `inf` for degenerate objectives.
pub fn tsv_row(score: &AhamScore, selected: bool) -> String {
    let mut cells = vec![
        score.checkpoint.step.to_string(),
        score.topic_count.to_string(),
        score.outlier_count.to_string(),
        two_decimals(score.outlier_ratio),
    ];
    for m in Metric::ALL {
        cells.push(two_decimals(score.mean_similarity.get(&m).copied()));
    }
    for m in Metric::ALL {
        cells.push(two_decimals(score.objective.get(&m).copied()));
    }
    cells.push(if selected {
        SELECTED_MARKER.into()
    } else {
        String::new()
    });
    cells.join("\t")
}

/// Header plus one row per score, in the order given.
pub fn render_tsv(scores: &[AhamScore], selected_step: Option<u64>) -> String {
    let mut out = TSV_COLUMNS.join("\t");
    out.push('\n');
    for s in scores {
        out.push_str(&tsv_row(s, Some(s.checkpoint.step) == selected_step));
        out.push('\n');
    }
    out
}

/// `step,objective_lev,objective_bert,objective_cos`, one row per score.
/// Missing objectives are empty cells.
pub fn render_trajectory(scores: &[AhamScore]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["step".to_string()];
    header.extend(
        Metric::ALL
            .iter()
            .map(|m| format!("objective_{}", m.name())),
    );
    w.write_record(&header)?;
    for s in scores {
        let mut row = vec![s.checkpoint.step.to_string()];
        row.extend(Metric::ALL.iter().map(|&m| {
            s.objective
                .get(&m)
                .map(|v| v.to_string())
                .unwrap_or_default()
        }));
        w.write_record(&row)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Store(format!("trajectory csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicRef {
    pub topic_id: i64,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvolutionEdge {
    pub from_topic: TopicRef,
    pub to_topic: TopicRef,
    pub doc_count: usize,
}

/// Documents flowing from each topic of `a` (outliers included) to each
/// topic of `b`. Zero-count pairs are omitted; edges are ordered by source
/// then target id.
pub fn topic_evolution_map(a: &TopicModel, b: &TopicModel) -> Result<Vec<EvolutionEdge>> {
    if a.corpus_id != b.corpus_id || a.assignment.len() != b.assignment.len() {
        return Err(Error::CorpusMismatch(format!(
            "corpus {} ({} docs) vs {} ({} docs)",
            a.corpus_id,
            a.assignment.len(),
            b.corpus_id,
            b.assignment.len()
        )));
    }
    let mut counts: BTreeMap<(i64, i64), usize> = BTreeMap::new();
    for (&from, &to) in a.assignment.labels.iter().zip(&b.assignment.labels) {
        *counts.entry((from, to)).or_default() += 1;
    }
    Ok(counts
        .into_iter()
        .map(|((from, to), doc_count)| EvolutionEdge {
            from_topic: TopicRef {
                topic_id: from,
                label: a.label_of(from),
            },
            to_topic: TopicRef {
                topic_id: to,
                label: b.label_of(to),
            },
            doc_count,
        })
        .collect())
}

/// Edges whose source is the outlier topic.
pub fn from_outliers(edges: &[EvolutionEdge]) -> impl Iterator<Item = &EvolutionEdge> {
    edges.iter().filter(|e| e.from_topic.topic_id == OUTLIER)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::EmbeddingCheckpoint;

    fn table1_base() -> AhamScore {
        let means = BTreeMap::from([
            (Metric::Levenshtein, 0.32),
            (Metric::GreedySemantic, 0.86),
            (Metric::LabelCosine, 0.25),
        ]);
        AhamScore::from_parts(EmbeddingCheckpoint::new("base", 0, 8), 15, 43, means)
    }

    #[test]
    fn base_row_renders_table_values() {
        let row = tsv_row(&table1_base(), false);
        let cells: Vec<&str> = row.split('\t').collect();
        assert_eq!(cells.len(), TSV_COLUMNS.len());
        assert_eq!(cells[1..7].join(" "), "15 43 2.87 0.32 0.86 0.25");
        assert_eq!(cells[10], "");
        assert!(tsv_row(&table1_base(), true).ends_with("\t*"));
    }

    #[test]
    fn degenerate_row_prints_inf_and_na() {
        let mut s =
            AhamScore::from_parts(EmbeddingCheckpoint::new("x", 5, 8), 0, 9, BTreeMap::new());
        s.objective.insert(Metric::LabelCosine, f64::INFINITY);
        let row = tsv_row(&s, false);
        assert_eq!(row, "5\t0\t9\tNA\tNA\tNA\tNA\tNA\tNA\tinf\t");
    }

    #[test]
    fn trajectory_has_one_row_per_score() {
        let mut b = table1_base();
        b.checkpoint = EmbeddingCheckpoint::new("s10", 10_000, 8);
        let csv = render_trajectory(&[table1_base(), b]).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "step,objective_lev,objective_bert,objective_cos");
        assert_eq!(lines.len(), 3);
        assert!(lines[2].starts_with("10000,"));
    }
}
