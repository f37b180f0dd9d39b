//! Density-based hierarchical clustering (HDBSCAN) over reduced embeddings.
//!
//! Core distance of a point is the distance to its `min_samples`-th nearest
//! other point. Mutual reachability `max(core_a, core_b, d(a, b))` feeds a
//! minimum spanning tree, which becomes a single-linkage dendrogram and then
//! a condensed tree at `min_cluster_size`. Flat clusters come from excess of
//! mass (default) or leaf selection; the root is never selected. Points that
//! reach no selected cluster are outliers, labeled `-1`.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const OUTLIER: i64 = -1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Selection {
    #[default]
    Eom,
    Leaf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClustererConfig {
    pub min_cluster_size: usize,
    /// Neighbors counted for the core distance, the point itself excluded.
    /// `None` means `min_cluster_size`.
    pub min_samples: Option<usize>,
    pub selection: Selection,
}

impl Default for ClustererConfig {
    fn default() -> Self {
        ClustererConfig {
            min_cluster_size: 5,
            min_samples: None,
            selection: Selection::Eom,
        }
    }
}

impl ClustererConfig {
    pub fn min_samples(&self) -> usize {
        self.min_samples.unwrap_or(self.min_cluster_size)
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_cluster_size < 2 {
            return Err(Error::InvalidParameter(
                "min_cluster_size must be >= 2".into(),
            ));
        }
        if self.min_samples() < 1 {
            return Err(Error::InvalidParameter("min_samples must be >= 1".into()));
        }
        Ok(())
    }
}

/// Flat clustering of `N` points. Topic ids run `0..T` in order of each
/// cluster's smallest member index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub labels: Vec<i64>,
    #[serde(rename = "T")]
    pub n_topics: usize,
    pub outliers: usize,
    /// Set when there were too few points to build a hierarchy; every point
    /// is then an outlier.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degenerate: bool,
}

impl Assignment {
    /// Relabel by first appearance and count topics and outliers.
    pub fn from_labels(raw: &[i64]) -> Self {
        let mut map = BTreeMap::new();
        let labels: Vec<i64> = raw
            .iter()
            .map(|&l| {
                if l < 0 {
                    OUTLIER
                } else {
                    let next = map.len() as i64;
                    *map.entry(l).or_insert(next)
                }
            })
            .collect();
        let outliers = labels.iter().filter(|&&l| l == OUTLIER).count();
        Assignment {
            labels,
            n_topics: map.len(),
            outliers,
            degenerate: false,
        }
    }

    pub fn all_outliers(n: usize) -> Self {
        Assignment {
            labels: vec![OUTLIER; n],
            n_topics: 0,
            outliers: n,
            degenerate: true,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Member indices of topic `t`, ascending.
    pub fn members(&self, t: i64) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == t)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn topic_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_topics];
        for &l in &self.labels {
            if l >= 0 {
                sizes[l as usize] += 1;
            }
        }
        sizes
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let body = serde_json::to_string_pretty(self)?;
        std::fs::write(path, body).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let body = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&body)?)
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn rows_f64(points: &Array2<f32>) -> Result<Vec<Vec<f64>>> {
    points
        .rows()
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            if r.iter().all(|v| v.is_finite()) {
                Ok(r.iter().map(|&v| f64::from(v)).collect())
            } else {
                Err(Error::NonFinite { row: i })
            }
        })
        .collect()
}

/// Distance from each point to its `min_samples`-th nearest other point.
pub fn core_distances(points: &Array2<f32>, min_samples: usize) -> Result<Vec<f64>> {
    let n = points.nrows();
    if min_samples < 1 {
        return Err(Error::InvalidParameter("min_samples must be >= 1".into()));
    }
    if n <= min_samples {
        return Err(Error::InsufficientData {
            needed: min_samples + 1,
            actual: n,
        });
    }
    let rows = rows_f64(points)?;
    Ok(core_from_rows(&rows, min_samples))
}

fn core_from_rows(rows: &[Vec<f64>], k: usize) -> Vec<f64> {
    let n = rows.len();
    (0..n)
        .map(|i| {
            let mut d: Vec<f64> = (0..n)
                .filter(|&j| j != i)
                .map(|j| euclidean(&rows[i], &rows[j]))
                .collect();
            let (_, kth, _) = d.select_nth_unstable_by(k - 1, f64::total_cmp);
            *kth
        })
        .collect()
}

/// Prim's algorithm over the dense mutual-reachability graph. Ties go to the
/// lowest index. Returns `(from, to, weight)` in insertion order.
fn mutual_reachability_mst(rows: &[Vec<f64>], core: &[f64]) -> Vec<(usize, usize, f64)> {
    let n = rows.len();
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut from = vec![0usize; n];
    let mut edges = Vec::with_capacity(n.saturating_sub(1));
    let mut current = 0;
    in_tree[0] = true;
    for _ in 1..n {
        let mut next = usize::MAX;
        let mut next_w = f64::INFINITY;
        for j in 0..n {
            if in_tree[j] {
                continue;
            }
            let d = euclidean(&rows[current], &rows[j])
                .max(core[current])
                .max(core[j]);
            if d < best[j] {
                best[j] = d;
                from[j] = current;
            }
            if best[j] < next_w || next == usize::MAX {
                next_w = best[j];
                next = j;
            }
        }
        in_tree[next] = true;
        edges.push((from[next], next, best[next]));
        current = next;
    }
    edges
}

/// One merge of the single-linkage dendrogram. Nodes `>= n` are earlier
/// merges, numbered in order.
#[derive(Debug, Clone, Copy)]
struct Merge {
    left: usize,
    right: usize,
    distance: f64,
    size: usize,
}

fn single_linkage(n: usize, mut edges: Vec<(usize, usize, f64)>) -> Vec<Merge> {
    edges.sort_by(|a, b| a.2.total_cmp(&b.2));
    let mut parent: Vec<usize> = (0..2 * n).collect();
    let mut size = vec![1usize; 2 * n];
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    for (a, b, w) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        let node = n + merges.len();
        let s = size[ra] + size[rb];
        parent[ra] = node;
        parent[rb] = node;
        size[node] = s;
        merges.push(Merge {
            left: ra,
            right: rb,
            distance: w,
            size: s,
        });
    }
    merges
}

/// Row of the condensed tree: `child` (a point `< n` or a cluster `>= n`)
/// leaves `parent` at density `lambda`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CondensedRow {
    pub parent: usize,
    pub child: usize,
    pub lambda: f64,
    pub child_size: usize,
}

fn condense(n: usize, merges: &[Merge], min_cluster_size: usize) -> Vec<CondensedRow> {
    let root = 2 * (n - 1);
    let node_size = |x: usize| if x < n { 1 } else { merges[x - n].size };
    let children = |x: usize| {
        let m = merges[x - n];
        (m.left, m.right)
    };
    let leaves_of = |x: usize| {
        let mut out = Vec::new();
        let mut stack = vec![x];
        while let Some(v) = stack.pop() {
            if v < n {
                out.push(v);
            } else {
                let (l, r) = children(v);
                stack.push(r);
                stack.push(l);
            }
        }
        out.sort_unstable();
        out
    };

    let mut relabel = vec![0usize; 2 * n - 1];
    relabel[root] = n;
    let mut next_label = n + 1;
    let mut rows = Vec::new();
    let mut queue = std::collections::VecDeque::from([root]);
    while let Some(node) = queue.pop_front() {
        if node < n {
            continue;
        }
        let (left, right) = children(node);
        let d = merges[node - n].distance;
        let lambda = if d > 0.0 { 1.0 / d } else { f64::INFINITY };
        let (ls, rs) = (node_size(left), node_size(right));
        let p = relabel[node];
        match (ls >= min_cluster_size, rs >= min_cluster_size) {
            (true, true) => {
                for (c, s) in [(left, ls), (right, rs)] {
                    relabel[c] = next_label;
                    next_label += 1;
                    rows.push(CondensedRow {
                        parent: p,
                        child: relabel[c],
                        lambda,
                        child_size: s,
                    });
                    queue.push_back(c);
                }
            }
            (false, false) => {
                for c in [left, right] {
                    for pt in leaves_of(c) {
                        rows.push(CondensedRow {
                            parent: p,
                            child: pt,
                            lambda,
                            child_size: 1,
                        });
                    }
                }
            }
            (false, true) | (true, false) => {
                let (small, big) = if ls < min_cluster_size {
                    (left, right)
                } else {
                    (right, left)
                };
                relabel[big] = p;
                queue.push_back(big);
                for pt in leaves_of(small) {
                    rows.push(CondensedRow {
                        parent: p,
                        child: pt,
                        lambda,
                        child_size: 1,
                    });
                }
            }
        }
    }
    rows
}

/// `sum((lambda_leave - lambda_birth) * size)` per cluster id.
fn stabilities(n: usize, tree: &[CondensedRow]) -> BTreeMap<usize, f64> {
    let mut birth: BTreeMap<usize, f64> = BTreeMap::new();
    birth.insert(n, 0.0);
    for r in tree.iter().filter(|r| r.child >= n) {
        birth.insert(r.child, r.lambda);
    }
    let mut stab: BTreeMap<usize, f64> = birth.keys().map(|&c| (c, 0.0)).collect();
    for r in tree {
        let gap = r.lambda - birth[&r.parent];
        // a cluster born and dissolved at infinite density contributes nothing
        let gap = if gap.is_nan() { 0.0 } else { gap };
        *stab.get_mut(&r.parent).expect("parent registered") += gap * r.child_size as f64;
    }
    stab
}

fn select_clusters(n: usize, tree: &[CondensedRow], selection: Selection) -> Vec<usize> {
    let mut stab = stabilities(n, tree);
    let cluster_children: BTreeMap<usize, Vec<usize>> =
        tree.iter()
            .filter(|r| r.child >= n)
            .fold(BTreeMap::new(), |mut m, r| {
                m.entry(r.parent).or_insert_with(Vec::new).push(r.child);
                m
            });
    let descendants = |c: usize| {
        let mut out = Vec::new();
        let mut stack = cluster_children.get(&c).cloned().unwrap_or_default();
        while let Some(v) = stack.pop() {
            out.push(v);
            stack.extend(cluster_children.get(&v).into_iter().flatten());
        }
        out
    };

    let non_root: Vec<usize> = stab.keys().copied().filter(|&c| c != n).collect();
    match selection {
        Selection::Leaf => non_root
            .into_iter()
            .filter(|c| !cluster_children.contains_key(c))
            .collect(),
        Selection::Eom => {
            let mut chosen: BTreeMap<usize, bool> = non_root.iter().map(|&c| (c, true)).collect();
            for &c in non_root.iter().rev() {
                let subtree: f64 = cluster_children
                    .get(&c)
                    .map_or(0.0, |ch| ch.iter().map(|k| stab[k]).sum());
                if subtree > stab[&c] {
                    chosen.insert(c, false);
                    stab.insert(c, subtree);
                } else {
                    for d in descendants(c) {
                        chosen.insert(d, false);
                    }
                }
            }
            chosen
                .into_iter()
                .filter(|&(_, s)| s)
                .map(|(c, _)| c)
                .collect()
        }
    }
}

fn label_points(n: usize, tree: &[CondensedRow], selected: &[usize]) -> Vec<i64> {
    let mut up = vec![usize::MAX; 2 * n];
    for r in tree {
        up[r.child] = r.parent;
    }
    let chosen: BTreeMap<usize, i64> = selected
        .iter()
        .enumerate()
        .map(|(i, &c)| (c, i as i64))
        .collect();
    (0..n)
        .map(|p| {
            let mut v = up[p];
            while v != usize::MAX {
                if let Some(&l) = chosen.get(&v) {
                    return l;
                }
                v = up[v];
            }
            OUTLIER
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Hdbscan {
    config: ClustererConfig,
}

impl Hdbscan {
    pub fn new(config: ClustererConfig) -> Result<Self> {
        config.validate()?;
        Ok(Hdbscan { config })
    }

    pub fn config(&self) -> &ClustererConfig {
        &self.config
    }

    /// Condensed cluster tree, for inspection. Cluster ids start at `N` (the
    /// root).
    pub fn condensed_tree(&self, points: &Array2<f32>) -> Result<Vec<CondensedRow>> {
        let rows = rows_f64(points)?;
        let n = rows.len();
        let k = self.config.min_samples();
        if n <= k {
            return Err(Error::InsufficientData {
                needed: k + 1,
                actual: n,
            });
        }
        let core = core_from_rows(&rows, k);
        let mst = mutual_reachability_mst(&rows, &core);
        let merges = single_linkage(n, mst);
        Ok(condense(n, &merges, self.config.min_cluster_size))
    }

    pub fn fit(&self, points: &Array2<f32>) -> Result<Assignment> {
        let n = points.nrows();
        if n < self.config.min_cluster_size || n <= self.config.min_samples() {
            rows_f64(points)?;
            log::warn!(
                "{n} points is too few for min_cluster_size {} / min_samples {}; all points are outliers",
                self.config.min_cluster_size,
                self.config.min_samples()
            );
            return Ok(Assignment::all_outliers(n));
        }
        let tree = self.condensed_tree(points)?;
        let selected = select_clusters(n, &tree, self.config.selection);
        Ok(Assignment::from_labels(&label_points(n, &tree, &selected)))
    }
}

/// HDBSCAN with `config`.
pub fn cluster(points: &Array2<f32>, config: &ClustererConfig) -> Result<Assignment> {
    Hdbscan::new(config.clone())?.fit(points)
}
