//! Planted corpora and point clouds with known structure, for tests and
//! examples.

use std::collections::HashMap;

use ndarray::Array2;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::corpus::{Corpus, Document};

/// `per_cluster` isotropic Gaussian samples around each center. Rows are
/// grouped by cluster; the second value is the cluster of each row.
pub fn gaussian_blobs(
    centers: &[Vec<f64>],
    per_cluster: usize,
    std_dev: f64,
    seed: u64,
) -> (Array2<f32>, Vec<usize>) {
    let dim = centers.first().map_or(0, Vec::len);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, std_dev).expect("finite std_dev");
    let n = centers.len() * per_cluster;
    let mut out = Array2::<f32>::zeros((n, dim));
    let mut truth = Vec::with_capacity(n);
    for (c, center) in centers.iter().enumerate() {
        for r in 0..per_cluster {
            let row = c * per_cluster + r;
            for (j, &m) in center.iter().enumerate() {
                out[[row, j]] = (m + noise.sample(&mut rng)) as f32;
            }
            truth.push(c);
        }
    }
    (out, truth)
}

/// Centers on the coordinate axes of `dim`-space, `scale` from the origin.
pub fn axis_centers(k: usize, dim: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..k)
        .map(|c| {
            let mut v = vec![0.0; dim];
            v[c % dim] = if c < dim { scale } else { -scale };
            v
        })
        .collect()
}

const THEMES: &[&[&str]] = &[
    &[
        "gene",
        "protein",
        "genome",
        "sequencing",
        "mutation",
        "transcription",
        "enzyme",
        "chromosome",
    ],
    &[
        "image",
        "pixel",
        "segmentation",
        "camera",
        "convolution",
        "texture",
        "lidar",
        "depth",
    ],
    &[
        "market",
        "stock",
        "portfolio",
        "trading",
        "price",
        "volatility",
        "dividend",
        "equity",
    ],
    &[
        "robot",
        "actuator",
        "gripper",
        "locomotion",
        "servo",
        "torque",
        "manipulator",
        "odometry",
    ],
    &[
        "patient",
        "clinical",
        "diagnosis",
        "hospital",
        "therapy",
        "symptom",
        "tumor",
        "dosage",
    ],
    &[
        "soil",
        "crop",
        "irrigation",
        "harvest",
        "fertilizer",
        "wheat",
        "drought",
        "pest",
    ],
];

const FILLER: &[&str] = &[
    "method",
    "approach",
    "results",
    "study",
    "analysis",
    "data",
    "model",
    "performance",
    "evaluation",
    "framework",
    "novel",
    "proposed",
    "experiments",
    "paper",
    "technique",
    "task",
    "benchmark",
    "baseline",
    "accuracy",
    "dataset",
];

#[derive(Debug, Clone)]
pub struct PlantedSpec {
    pub topics: usize,
    pub docs_per_topic: usize,
    /// Theme words drawn into each abstract.
    pub marker_words: usize,
    /// Shared filler words drawn into each abstract.
    pub filler_words: usize,
    pub seed: u64,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        PlantedSpec {
            topics: 3,
            docs_per_topic: 30,
            marker_words: 4,
            filler_words: 8,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantedCorpus {
    pub corpus: Corpus,
    /// Planted topic of each document.
    pub topics: Vec<usize>,
    /// Theme vocabulary of each topic.
    pub markers: Vec<Vec<String>>,
    pub filler: Vec<String>,
}

/// Documents whose titles and abstracts mix one topic's theme words with
/// shared filler. At most six topics are available.
pub fn planted_corpus(spec: &PlantedSpec) -> PlantedCorpus {
    assert!(
        spec.topics <= THEMES.len(),
        "at most {} planted topics",
        THEMES.len()
    );
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut docs = Vec::new();
    let mut topics = Vec::new();
    for t in 0..spec.topics {
        let theme = THEMES[t];
        for d in 0..spec.docs_per_topic {
            let title: Vec<&str> = vec![
                *theme.choose(&mut rng).expect("non-empty"),
                *theme.choose(&mut rng).expect("non-empty"),
                *FILLER.choose(&mut rng).expect("non-empty"),
            ];
            let mut body: Vec<&str> = (0..spec.marker_words)
                .map(|_| *theme.choose(&mut rng).expect("non-empty"))
                .collect();
            body.extend(
                (0..spec.filler_words).map(|_| *FILLER.choose(&mut rng).expect("non-empty")),
            );
            // interleave so bigrams mix theme and filler words
            body.shuffle(&mut rng);
            let year = 2000 + ((t * spec.docs_per_topic + d) % 20) as i32;
            docs.push(Document::new(
                format!("t{t}-d{d:03}"),
                &title.join(" "),
                Some(&format!("{}.", body.join(" "))),
                Some(year),
            ));
            topics.push(t);
        }
    }
    PlantedCorpus {
        corpus: Corpus::new(docs, "planted").expect("unique ids"),
        topics,
        markers: THEMES[..spec.topics]
            .iter()
            .map(|t| t.iter().map(|w| w.to_string()).collect())
            .collect(),
        filler: FILLER.iter().map(|w| w.to_string()).collect(),
    }
}

impl PlantedCorpus {
    /// Token weights for a mock checkpoint that emphasises theme words over
    /// filler.
    pub fn adapted_weights(&self, marker: f32, filler: f32) -> HashMap<String, f32> {
        let mut w = HashMap::new();
        for m in self.markers.iter().flatten() {
            w.insert(m.clone(), marker);
        }
        for f in &self.filler {
            w.insert(f.clone(), filler);
        }
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text;

    #[test]
    fn vocabulary_avoids_stopwords() {
        for w in THEMES.iter().flat_map(|t| t.iter()).chain(FILLER) {
            assert!(!text::is_stopword(w), "{w}");
        }
    }

    #[test]
    fn planted_corpus_is_reproducible() {
        let spec = PlantedSpec::default();
        let a = planted_corpus(&spec);
        let b = planted_corpus(&spec);
        assert_eq!(a.corpus, b.corpus);
        assert_eq!(a.corpus.len(), 90);
        assert_eq!(a.topics.iter().filter(|&&t| t == 2).count(), 30);
    }

    #[test]
    fn blobs_center_where_asked() {
        let (x, truth) = gaussian_blobs(&axis_centers(2, 3, 5.0), 200, 0.1, 1);
        let mean0: f32 = x.column(0).iter().take(200).sum::<f32>() / 200.0;
        assert!((mean0 - 5.0).abs() < 0.05);
        assert_eq!(truth[250], 1);
    }
}
