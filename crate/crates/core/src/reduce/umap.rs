//! Uniform manifold approximation and projection.
//!
//! Stages: exact k-NN graph, per-point bandwidth calibration into a fuzzy
//! simplicial set, fuzzy-union symmetrization, spectral (or random)
//! initialization, then epoch-scheduled SGD with attractive edge samples and
//! negative samples. Every random draw comes from one ChaCha stream seeded by
//! [`ReducerConfig::seed`] and the layout loop is sequential, so output is
//! bitwise reproducible.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{to_f64_checked, Init, Reducer, ReducerConfig};
use crate::error::{Error, Result};

const SMOOTH_K_TOLERANCE: f64 = 1e-5;
const MIN_K_DIST_SCALE: f64 = 1e-3;
const BANDWIDTH_ITERATIONS: usize = 64;
const GRAD_CLIP: f64 = 4.0;
const INIT_SCALE: f64 = 10.0;

#[derive(Debug, Clone)]
pub struct Umap {
    config: ReducerConfig,
}

impl Umap {
    pub fn new(config: ReducerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Umap { config })
    }

    pub fn config(&self) -> &ReducerConfig {
        &self.config
    }
}

impl Reducer for Umap {
    fn fit_reduce(&self, embeddings: &Array2<f32>) -> Result<Array2<f32>> {
        let cfg = &self.config;
        let (n, d) = embeddings.dim();
        if n <= cfg.n_neighbors {
            return Err(Error::InsufficientData {
                needed: cfg.n_neighbors,
                actual: n,
            });
        }
        if d < cfg.n_components {
            return Err(Error::InvalidParameter(format!(
                "input dimension {d} is below n_components {}",
                cfg.n_components
            )));
        }
        let x = to_f64_checked(embeddings)?;

        let knn = nearest_neighbors(&x, cfg);
        let graph = fuzzy_simplicial_set(&knn, n, cfg);
        let (a, b) = fit_curve_params(cfg.spread, cfg.min_dist);

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut embedding = initialize(&graph, n, cfg, &mut rng);
        optimize_layout(&mut embedding, &graph, n, a, b, cfg, &mut rng);

        Ok(embedding.mapv(|v| v as f32))
    }
}

/// Neighbor lists with the point itself first, then the `k - 1` nearest others
/// ordered by (distance, index).
struct Knn {
    indices: Vec<Vec<usize>>,
    distances: Vec<Vec<f64>>,
}

fn nearest_neighbors(x: &Array2<f64>, cfg: &ReducerConfig) -> Knn {
    let n = x.nrows();
    let k = cfg.n_neighbors;
    let rows: Vec<Vec<f64>> = x.rows().into_iter().map(|r| r.to_vec()).collect();
    let lists: Vec<(Vec<usize>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut cand: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (cfg.metric.distance(&rows[i], &rows[j]), j))
                .collect();
            cand.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.cmp(&q.1)));
            let mut idx = Vec::with_capacity(k);
            let mut dist = Vec::with_capacity(k);
            idx.push(i);
            dist.push(0.0);
            for &(dd, j) in cand.iter().take(k - 1) {
                idx.push(j);
                dist.push(dd);
            }
            (idx, dist)
        })
        .collect();
    let (indices, distances) = lists.into_iter().unzip();
    Knn { indices, distances }
}

/// Per-point (rho, sigma): distance to the nearest distinct neighbor and the
/// bandwidth that makes the neighbor memberships sum to `log2(k)`.
fn smooth_knn_dist(distances: &[Vec<f64>], k: usize, local_connectivity: f64) -> Vec<(f64, f64)> {
    let target = (k as f64).log2();
    let mean_all = {
        let total: f64 = distances.iter().flatten().sum();
        total / (distances.len() * k) as f64
    };
    distances
        .iter()
        .map(|row| {
            let non_zero: Vec<f64> = row.iter().copied().filter(|&d| d > 0.0).collect();
            let mut rho = 0.0;
            if non_zero.len() as f64 >= local_connectivity {
                let index = local_connectivity.floor() as usize;
                let interpolation = local_connectivity - index as f64;
                if index > 0 {
                    rho = non_zero[index - 1];
                    if interpolation > 1e-5 {
                        rho += interpolation * (non_zero[index] - non_zero[index - 1]);
                    }
                } else {
                    rho = interpolation * non_zero[0];
                }
            } else if let Some(m) = non_zero.iter().copied().reduce(f64::max) {
                rho = m;
            }

            let (mut lo, mut hi, mut mid) = (0.0f64, f64::INFINITY, 1.0f64);
            for _ in 0..BANDWIDTH_ITERATIONS {
                let psum: f64 = row[1..]
                    .iter()
                    .map(|&d| {
                        let gap = d - rho;
                        if gap > 0.0 {
                            (-gap / mid).exp()
                        } else {
                            1.0
                        }
                    })
                    .sum();
                if (psum - target).abs() < SMOOTH_K_TOLERANCE {
                    break;
                }
                if psum > target {
                    hi = mid;
                    mid = (lo + hi) / 2.0;
                } else {
                    lo = mid;
                    mid = if hi.is_infinite() {
                        mid * 2.0
                    } else {
                        (lo + hi) / 2.0
                    };
                }
            }

            let mut sigma = mid;
            if rho > 0.0 {
                let mean_row = row.iter().sum::<f64>() / row.len() as f64;
                sigma = sigma.max(MIN_K_DIST_SCALE * mean_row);
            } else {
                sigma = sigma.max(MIN_K_DIST_SCALE * mean_all);
            }
            (rho, sigma)
        })
        .collect()
}

/// Symmetric fuzzy graph as a row-major edge list `(i, j, w)`, both
/// directions present.
pub(crate) struct FuzzyGraph {
    pub edges: Vec<(usize, usize, f64)>,
}

fn fuzzy_simplicial_set(knn: &Knn, n: usize, cfg: &ReducerConfig) -> FuzzyGraph {
    let k = cfg.n_neighbors;
    let bandwidths = smooth_knn_dist(&knn.distances, k, cfg.local_connectivity);

    let mut directed: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for i in 0..n {
        let (rho, sigma) = bandwidths[i];
        for (&j, &d) in knn.indices[i].iter().zip(&knn.distances[i]) {
            if j == i {
                continue;
            }
            let w = if d - rho <= 0.0 || sigma == 0.0 {
                1.0
            } else {
                (-(d - rho) / sigma).exp()
            };
            directed.insert((i, j), w);
        }
    }

    let mix = cfg.set_op_mix_ratio;
    let mut sym: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (&(i, j), &w) in &directed {
        let wt = directed.get(&(j, i)).copied().unwrap_or(0.0);
        let prod = w * wt;
        let union = w + wt - prod;
        let val = mix * union + (1.0 - mix) * prod;
        if val > 0.0 {
            sym.insert((i, j), val);
            sym.insert((j, i), val);
        }
    }
    FuzzyGraph {
        edges: sym.into_iter().map(|((i, j), w)| (i, j, w)).collect(),
    }
}

/// Least-squares fit of `1 / (1 + a x^(2b))` to the offset exponential
/// membership curve defined by `spread` and `min_dist`.
pub fn fit_curve_params(spread: f64, min_dist: f64) -> (f64, f64) {
    let xs: Vec<f64> = (0..300).map(|i| 3.0 * spread * i as f64 / 299.0).collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|&x| {
            if x < min_dist {
                1.0
            } else {
                (-(x - min_dist) / spread).exp()
            }
        })
        .collect();

    let sse = |a: f64, b: f64| -> f64 {
        xs.iter()
            .zip(&ys)
            .map(|(&x, &y)| {
                let r = 1.0 / (1.0 + a * x.powf(2.0 * b)) - y;
                r * r
            })
            .sum()
    };

    // Levenberg-Marquardt on two parameters
    let (mut a, mut b) = (1.0f64, 1.0f64);
    let mut lambda = 1e-3;
    let mut cost = sse(a, b);
    for _ in 0..500 {
        let (mut jtj, mut jtr) = ([[0.0f64; 2]; 2], [0.0f64; 2]);
        for (&x, &y) in xs.iter().zip(&ys) {
            let (u, lnx) = if x > 0.0 {
                (x.powf(2.0 * b), x.ln())
            } else {
                (0.0, 0.0)
            };
            let denom = 1.0 + a * u;
            let r = 1.0 / denom - y;
            let da = -u / (denom * denom);
            let db = -a * u * 2.0 * lnx / (denom * denom);
            jtj[0][0] += da * da;
            jtj[0][1] += da * db;
            jtj[1][1] += db * db;
            jtr[0] += da * r;
            jtr[1] += db * r;
        }
        jtj[1][0] = jtj[0][1];

        let mut improved = false;
        for _ in 0..50 {
            let m00 = jtj[0][0] * (1.0 + lambda);
            let m11 = jtj[1][1] * (1.0 + lambda);
            let det = m00 * m11 - jtj[0][1] * jtj[1][0];
            if det == 0.0 || !det.is_finite() {
                lambda *= 10.0;
                continue;
            }
            let step_a = -(m11 * jtr[0] - jtj[0][1] * jtr[1]) / det;
            let step_b = -(m00 * jtr[1] - jtj[1][0] * jtr[0]) / det;
            let (na, nb) = (a + step_a, b + step_b);
            if na > 0.0 && nb > 0.0 {
                let new_cost = sse(na, nb);
                if new_cost < cost {
                    let rel =
                        (step_a.abs() / a.abs().max(1e-12)).max(step_b.abs() / b.abs().max(1e-12));
                    a = na;
                    b = nb;
                    let dc = cost - new_cost;
                    cost = new_cost;
                    lambda = (lambda / 10.0).max(1e-12);
                    improved = true;
                    if rel < 1e-12 || dc <= 1e-16 * cost.max(1e-300) {
                        return (a, b);
                    }
                    break;
                }
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    (a, b)
}

fn initialize(
    graph: &FuzzyGraph,
    n: usize,
    cfg: &ReducerConfig,
    rng: &mut ChaCha8Rng,
) -> Array2<f64> {
    let dim = cfg.n_components;
    let spectral = match cfg.init {
        Init::Spectral if n <= cfg.spectral_max_points && n > dim + 1 && is_connected(graph, n) => {
            spectral_layout(graph, n, dim)
        }
        _ => None,
    };

    let mut emb = match spectral {
        Some(mut e) => {
            let max_abs = e.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let expansion = if max_abs > 0.0 {
                INIT_SCALE / max_abs
            } else {
                1.0
            };
            for v in e.iter_mut() {
                *v = *v * expansion + 1e-4 * rng.sample::<f64, _>(StandardNormal);
            }
            e
        }
        None => {
            if cfg.init == Init::Spectral {
                log::debug!("spectral initialization unavailable; using random layout");
            }
            Array2::from_shape_fn((n, dim), |_| rng.random::<f64>() * 20.0 - 10.0)
        }
    };

    for mut col in emb.columns_mut() {
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        col.mapv_inplace(|v| {
            if span > 0.0 {
                INIT_SCALE * (v - lo) / span
            } else {
                0.0
            }
        });
    }
    emb
}

fn is_connected(graph: &FuzzyGraph, n: usize) -> bool {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let mut components = n;
    for &(i, j, _) in &graph.edges {
        let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
        if ri != rj {
            parent[ri] = rj;
            components -= 1;
        }
    }
    components == 1
}

/// Eigenvectors 2..=dim+1 of the symmetric normalized Laplacian.
fn spectral_layout(graph: &FuzzyGraph, n: usize, dim: usize) -> Option<Array2<f64>> {
    let mut w = DMatrix::<f64>::zeros(n, n);
    for &(i, j, v) in &graph.edges {
        w[(i, j)] = v;
    }
    let deg: Vec<f64> = (0..n).map(|i| w.row(i).sum()).collect();
    if deg.iter().any(|&d| d <= 0.0) {
        return None;
    }
    let inv_sqrt: Vec<f64> = deg.iter().map(|d| 1.0 / d.sqrt()).collect();
    let mut lap = DMatrix::<f64>::identity(n, n);
    for i in 0..n {
        for j in 0..n {
            if w[(i, j)] != 0.0 {
                lap[(i, j)] -= inv_sqrt[i] * w[(i, j)] * inv_sqrt[j];
            }
        }
    }
    let eig = SymmetricEigen::new(lap);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&p, &q| {
        eig.eigenvalues[p]
            .total_cmp(&eig.eigenvalues[q])
            .then(p.cmp(&q))
    });

    let mut out = Array2::<f64>::zeros((n, dim));
    for (c, &col) in order.iter().skip(1).take(dim).enumerate() {
        let v = eig.eigenvectors.column(col);
        // fix the sign so the largest-magnitude entry is positive
        let pivot = v
            .iter()
            .copied()
            .fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for r in 0..n {
            out[[r, c]] = sign * v[r];
        }
    }
    if out.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some(out)
}

fn optimize_layout(
    emb: &mut Array2<f64>,
    graph: &FuzzyGraph,
    n: usize,
    a: f64,
    b: f64,
    cfg: &ReducerConfig,
    rng: &mut ChaCha8Rng,
) {
    let n_epochs = cfg.n_epochs;
    let max_w = graph.edges.iter().map(|e| e.2).fold(0.0f64, f64::max);
    if max_w <= 0.0 {
        return;
    }
    let cutoff = max_w / n_epochs as f64;
    let edges: Vec<(usize, usize, f64)> = graph
        .edges
        .iter()
        .copied()
        .filter(|e| e.2 >= cutoff)
        .collect();

    // an edge of weight w is sampled every (max_w / w) epochs
    let epochs_per_sample: Vec<f64> = edges.iter().map(|e| max_w / e.2).collect();
    let neg_rate = cfg.negative_sample_rate as f64;
    let epochs_per_negative: Vec<f64> = epochs_per_sample.iter().map(|e| e / neg_rate).collect();
    let mut next_sample = epochs_per_sample.clone();
    let mut next_negative = epochs_per_negative.clone();

    let dim = emb.ncols();
    let gamma = cfg.repulsion_strength;
    let mut current = vec![0.0f64; dim];

    for epoch in 0..n_epochs {
        let alpha = cfg.learning_rate * (1.0 - epoch as f64 / n_epochs as f64);
        let e = epoch as f64;
        for (idx, &(j, k, _)) in edges.iter().enumerate() {
            if next_sample[idx] > e {
                continue;
            }
            let d2 = sq_dist(emb, j, k);
            let coeff = if d2 > 0.0 {
                -2.0 * a * b * d2.powf(b - 1.0) / (a * d2.powf(b) + 1.0)
            } else {
                0.0
            };
            for c in 0..dim {
                let grad = (coeff * (emb[[j, c]] - emb[[k, c]])).clamp(-GRAD_CLIP, GRAD_CLIP);
                emb[[j, c]] += grad * alpha;
                emb[[k, c]] -= grad * alpha;
            }
            next_sample[idx] += epochs_per_sample[idx];

            let n_neg = ((e - next_negative[idx]) / epochs_per_negative[idx])
                .floor()
                .max(0.0) as usize;
            for _ in 0..n_neg {
                let other = rng.random_range(0..n);
                let d2 = sq_dist(emb, j, other);
                let coeff = if d2 > 0.0 {
                    2.0 * gamma * b / ((0.001 + d2) * (a * d2.powf(b) + 1.0))
                } else {
                    0.0
                };
                if coeff <= 0.0 {
                    continue;
                }
                for c in 0..dim {
                    current[c] =
                        (coeff * (emb[[j, c]] - emb[[other, c]])).clamp(-GRAD_CLIP, GRAD_CLIP);
                }
                for c in 0..dim {
                    emb[[j, c]] += current[c] * alpha;
                }
            }
            next_negative[idx] += n_neg as f64 * epochs_per_negative[idx];
        }
    }
}

fn sq_dist(emb: &Array2<f64>, i: usize, j: usize) -> f64 {
    emb.row(i)
        .iter()
        .zip(emb.row(j).iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bandwidth_hits_log2_k() {
        let rows = vec![vec![0.0, 0.5, 1.0, 1.5, 2.0]];
        let (rho, sigma) = smooth_knn_dist(&rows, 5, 1.0)[0];
        assert_eq!(rho, 0.5);
        let psum: f64 = rows[0][1..]
            .iter()
            .map(|&d| {
                if d - rho > 0.0 {
                    (-(d - rho) / sigma).exp()
                } else {
                    1.0
                }
            })
            .sum();
        assert!((psum - 5f64.log2()).abs() < 1e-4);
    }

    #[test]
    fn fuzzy_union_is_symmetric_and_bounded() {
        let x = Array2::from_shape_fn((12, 3), |(i, j)| {
            ((i * 7 + j * 3) % 11) as f64 + 0.1 * j as f64
        });
        let cfg = ReducerConfig {
            metric: super::super::Metric::Euclidean,
            ..Default::default()
        };
        let knn = nearest_neighbors(&x, &cfg);
        let g = fuzzy_simplicial_set(&knn, 12, &cfg);
        let map: BTreeMap<(usize, usize), f64> =
            g.edges.iter().map(|&(i, j, w)| ((i, j), w)).collect();
        for (&(i, j), &w) in &map {
            assert_eq!(map[&(j, i)], w);
            assert!(w > 0.0 && w <= 1.0);
            assert_ne!(i, j);
        }
    }

    #[test]
    fn knn_puts_self_first() {
        let x = Array2::from_shape_vec((4, 1), vec![0.0, 1.0, 3.0, 3.0]).unwrap();
        let cfg = ReducerConfig {
            n_neighbors: 3,
            metric: super::super::Metric::Euclidean,
            ..Default::default()
        };
        let knn = nearest_neighbors(&x, &cfg);
        assert_eq!(knn.indices[2], vec![2, 3, 1]);
        assert_eq!(knn.distances[2], vec![0.0, 0.0, 2.0]);
    }
}
