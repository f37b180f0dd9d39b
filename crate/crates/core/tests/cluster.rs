use std::collections::{BTreeMap, BTreeSet};

use aham::cluster::{cluster, ClustererConfig, Hdbscan, Selection, OUTLIER};
use aham::synthetic::{axis_centers, gaussian_blobs};
use ndarray::Array2;
use proptest::prelude::*;
use serde::Deserialize;

#[derive(Deserialize)]
struct Reference {
    points: Vec<Vec<f32>>,
    min_cluster_size: usize,
    min_samples: usize,
    labels: Vec<i64>,
    /// The reference's own labels change when the rows are permuted.
    tie_sensitive: bool,
}

fn references() -> Vec<Reference> {
    serde_json::from_str(include_str!("fixtures/hdbscan_reference.json")).unwrap()
}

fn matrix(points: &[Vec<f32>]) -> Array2<f32> {
    let d = points[0].len();
    Array2::from_shape_vec((points.len(), d), points.concat()).unwrap()
}

/// Same partition up to a bijection of cluster ids, with identical outliers.
fn same_partition(a: &[i64], b: &[i64]) -> bool {
    let mut fwd = BTreeMap::new();
    let mut back = BTreeMap::new();
    a.len() == b.len()
        && a.iter().zip(b).all(|(&x, &y)| {
            if (x == OUTLIER) != (y == OUTLIER) {
                return false;
            }
            x == OUTLIER || (*fwd.entry(x).or_insert(y) == y && *back.entry(y).or_insert(x) == x)
        })
}

#[test]
fn matches_reference_implementation() {
    let refs = references();
    let mut agree = 0;
    for (i, r) in refs.iter().enumerate() {
        let cfg = ClustererConfig {
            min_cluster_size: r.min_cluster_size,
            min_samples: Some(r.min_samples),
            selection: Selection::Eom,
        };
        let got = cluster(&matrix(&r.points), &cfg).unwrap();
        let same = same_partition(&got.labels, &r.labels);
        assert!(
            same || r.tie_sensitive,
            "instance {i}: got {:?}\nwant {:?}",
            got.labels,
            r.labels
        );
        agree += usize::from(same);
    }
    assert!(agree >= 20, "{agree} of {} instances agree", refs.len());
}

#[test]
fn well_separated_blobs() {
    let (x, truth) = gaussian_blobs(&axis_centers(3, 2, 10.0), 30, 0.5, 4);
    let a = cluster(&x, &ClustererConfig::default()).unwrap();
    assert_eq!(a.n_topics, 3);
    assert!(a.outliers <= 9);
    let t: Vec<i64> = truth.iter().map(|&t| t as i64).collect();
    let kept: Vec<(i64, i64)> = a
        .labels
        .iter()
        .zip(&t)
        .filter(|(&l, _)| l != OUTLIER)
        .map(|(&l, &t)| (l, t))
        .collect();
    let (l, t): (Vec<i64>, Vec<i64>) = kept.into_iter().unzip();
    assert!(same_partition(&l, &t));
}

#[test]
fn leaf_selection_is_at_least_as_fine_as_eom() {
    let (x, _) = gaussian_blobs(&axis_centers(4, 3, 6.0), 25, 1.0, 8);
    let eom = cluster(&x, &ClustererConfig::default()).unwrap();
    let leaf = cluster(
        &x,
        &ClustererConfig {
            selection: Selection::Leaf,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(leaf.n_topics >= eom.n_topics);
}

#[test]
fn condensed_tree_conserves_points() {
    let (x, _) = gaussian_blobs(&axis_centers(2, 2, 5.0), 20, 1.0, 6);
    let h = Hdbscan::new(ClustererConfig::default()).unwrap();
    let tree = h.condensed_tree(&x).unwrap();
    let points: BTreeSet<usize> = tree
        .iter()
        .filter(|r| r.child < 40)
        .map(|r| r.child)
        .collect();
    assert_eq!(points.len(), 40);
    assert_eq!(tree.iter().filter(|r| r.child < 40).count(), 40);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn clusters_meet_minimum_size(
        pts in prop::collection::vec(prop::collection::vec(-5.0f32..5.0, 2), 6..60),
        mcs in 2usize..8,
        ms in 1usize..6,
        leaf in any::<bool>(),
    ) {
        let x = matrix(&pts);
        let cfg = ClustererConfig {
            min_cluster_size: mcs,
            min_samples: Some(ms),
            selection: if leaf { Selection::Leaf } else { Selection::Eom },
        };
        let a = cluster(&x, &cfg).unwrap();
        prop_assert_eq!(a.labels.len(), pts.len());
        prop_assert_eq!(a.outliers + a.topic_sizes().iter().sum::<usize>(), pts.len());
        for s in a.topic_sizes() {
            prop_assert!(s >= mcs);
        }
        // ids are dense and ordered by first member
        let mut next = 0;
        for &l in &a.labels {
            if l == next { next += 1; }
            prop_assert!(l < next);
        }
    }
}
