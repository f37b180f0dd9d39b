//! Dimensionality reduction of checkpoint embeddings before clustering.
//!
//! [`Umap`] is the production reducer; [`Pca`] plugs into the same
//! [`Reducer`] trait for tests that want a deterministic linear projection.

mod pca;
mod umap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use pca::Pca;
pub use umap::{fit_curve_params, Umap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Cosine,
    Euclidean,
}

impl Metric {
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Euclidean => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            Metric::Cosine => {
                let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
                for (x, y) in a.iter().zip(b) {
                    dot += x * y;
                    na += x * x;
                    nb += y * y;
                }
                if na == 0.0 && nb == 0.0 {
                    0.0
                } else if na == 0.0 || nb == 0.0 {
                    1.0
                } else {
                    (1.0 - dot / (na.sqrt() * nb.sqrt())).max(0.0)
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Init {
    /// Laplacian eigenmap of the fuzzy graph; random when the graph is
    /// disconnected or larger than [`ReducerConfig::spectral_max_points`].
    #[default]
    Spectral,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReducerConfig {
    /// Neighborhood size, the point itself included.
    pub n_neighbors: usize,
    pub n_components: usize,
    pub min_dist: f64,
    pub metric: Metric,
    pub seed: u64,
    pub n_epochs: usize,
    pub learning_rate: f64,
    pub negative_sample_rate: usize,
    pub spread: f64,
    pub local_connectivity: f64,
    pub set_op_mix_ratio: f64,
    pub repulsion_strength: f64,
    pub init: Init,
    pub spectral_max_points: usize,
}

impl Default for ReducerConfig {
    fn default() -> Self {
        ReducerConfig {
            n_neighbors: 5,
            n_components: 5,
            min_dist: 0.0,
            metric: Metric::Cosine,
            seed: 42,
            n_epochs: 500,
            learning_rate: 1.0,
            negative_sample_rate: 5,
            spread: 1.0,
            local_connectivity: 1.0,
            set_op_mix_ratio: 1.0,
            repulsion_strength: 1.0,
            init: Init::Spectral,
            spectral_max_points: 2048,
        }
    }
}

impl ReducerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.n_neighbors < 2 {
            return bad("n_neighbors must be >= 2");
        }
        if self.n_components < 1 {
            return bad("n_components must be >= 1");
        }
        if !(self.min_dist >= 0.0) || !(self.spread > 0.0) || self.min_dist > self.spread {
            return bad("need 0 <= min_dist <= spread and spread > 0");
        }
        if self.n_epochs == 0 {
            return bad("n_epochs must be >= 1");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be > 0");
        }
        if !(self.local_connectivity >= 1.0) {
            return bad("local_connectivity must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.set_op_mix_ratio) {
            return bad("set_op_mix_ratio must be in [0, 1]");
        }
        Ok(())
    }
}

pub trait Reducer {
    /// Project `N × D` rows to `N × k`.
    fn fit_reduce(&self, embeddings: &Array2<f32>) -> Result<Array2<f32>>;
}

/// UMAP with `config`.
pub fn fit_reduce(embeddings: &Array2<f32>, config: &ReducerConfig) -> Result<Array2<f32>> {
    Umap::new(config.clone())?.fit_reduce(embeddings)
}

pub(crate) fn to_f64_checked(x: &Array2<f32>) -> Result<Array2<f64>> {
    for (i, row) in x.rows().into_iter().enumerate() {
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: i });
        }
    }
    Ok(x.mapv(f64::from))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_pipeline_configuration() {
        let c = ReducerConfig::default();
        assert_eq!((c.n_neighbors, c.n_components), (5, 5));
        assert_eq!(c.min_dist, 0.0);
        assert_eq!(c.metric, Metric::Cosine);
        assert_eq!(c.seed, 42);
        assert_eq!(c.n_epochs, 500);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn invalid_configs() {
        for c in [
            ReducerConfig {
                n_neighbors: 1,
                ..Default::default()
            },
            ReducerConfig {
                n_components: 0,
                ..Default::default()
            },
            ReducerConfig {
                min_dist: -0.5,
                ..Default::default()
            },
        ] {
            assert!(c.validate().is_err());
        }
    }

    #[test]
    fn cosine_distance_edge_cases() {
        assert_eq!(Metric::Cosine.distance(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert_eq!(Metric::Cosine.distance(&[1.0, 0.0], &[0.0, 0.0]), 1.0);
        assert!((Metric::Cosine.distance(&[1.0, 0.0], &[0.0, 2.0]) - 1.0).abs() < 1e-15);
        assert_eq!(Metric::Euclidean.distance(&[0.0, 3.0], &[4.0, 0.0]), 5.0);
    }
}
