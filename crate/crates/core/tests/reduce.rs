use aham::reduce::{fit_curve_params, Init, Metric, Pca, Reducer, ReducerConfig, Umap};
use aham::synthetic::{axis_centers, gaussian_blobs};
use aham::Error;
use ndarray::Array2;
use serde::Deserialize;

#[derive(Deserialize)]
struct CurveCase {
    spread: f64,
    min_dist: f64,
    a: f64,
    b: f64,
}

#[test]
fn curve_params_match_least_squares_reference() {
    let cases: Vec<CurveCase> =
        serde_json::from_str(include_str!("fixtures/umap_curve_params.json")).unwrap();
    for c in cases {
        let (a, b) = fit_curve_params(c.spread, c.min_dist);
        assert!(
            (a - c.a).abs() < 1e-4,
            "a {a} vs {} at {:?}",
            c.a,
            (c.spread, c.min_dist)
        );
        assert!(
            (b - c.b).abs() < 1e-4,
            "b {b} vs {} at {:?}",
            c.b,
            (c.spread, c.min_dist)
        );
    }
}

fn nearest_label(y: &Array2<f32>, truth: &[usize]) -> f64 {
    let n = y.nrows();
    let mut hits = 0;
    for i in 0..n {
        let mut best = (f32::INFINITY, 0);
        for j in 0..n {
            if i == j {
                continue;
            }
            let d: f32 = y
                .row(i)
                .iter()
                .zip(y.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if d < best.0 {
                best = (d, j);
            }
        }
        if truth[best.1] == truth[i] {
            hits += 1;
        }
    }
    hits as f64 / n as f64
}

#[test]
fn output_shape_and_finiteness() {
    let (x, _) = gaussian_blobs(&axis_centers(3, 8, 4.0), 20, 0.5, 3);
    let y = Umap::new(ReducerConfig::default())
        .unwrap()
        .fit_reduce(&x)
        .unwrap();
    assert_eq!(y.dim(), (60, 5));
    assert!(y.iter().all(|v| v.is_finite()));
}

#[test]
fn same_seed_is_bitwise_identical() {
    let (x, _) = gaussian_blobs(&axis_centers(3, 16, 3.0), 25, 0.6, 9);
    let umap = Umap::new(ReducerConfig::default()).unwrap();
    let a = umap.fit_reduce(&x).unwrap();
    let b = umap.fit_reduce(&x).unwrap();
    let bits = |m: &Array2<f32>| m.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));

    let other = Umap::new(ReducerConfig {
        seed: 43,
        ..Default::default()
    })
    .unwrap()
    .fit_reduce(&x)
    .unwrap();
    assert_ne!(bits(&a), bits(&other));
}

#[test]
fn two_blobs_stay_separated() {
    let (x, truth) = gaussian_blobs(&axis_centers(2, 10, 5.0), 40, 0.8, 11);
    for init in [Init::Spectral, Init::Random] {
        let cfg = ReducerConfig {
            n_neighbors: 10,
            n_components: 2,
            init,
            ..Default::default()
        };
        let y = Umap::new(cfg).unwrap().fit_reduce(&x).unwrap();
        assert!(nearest_label(&y, &truth) >= 0.95, "{init:?}");
    }
}

#[test]
fn euclidean_metric_is_supported() {
    let (x, truth) = gaussian_blobs(&axis_centers(3, 4, 6.0), 30, 0.5, 5);
    let cfg = ReducerConfig {
        metric: Metric::Euclidean,
        n_components: 2,
        ..Default::default()
    };
    let y = Umap::new(cfg).unwrap().fit_reduce(&x).unwrap();
    assert!(nearest_label(&y, &truth) >= 0.95);
}

#[test]
fn too_few_points_is_an_error() {
    let x = Array2::<f32>::ones((5, 8));
    let err = Umap::new(ReducerConfig::default())
        .unwrap()
        .fit_reduce(&x)
        .unwrap_err();
    assert!(matches!(err, Error::InsufficientData { .. }), "{err}");
}

#[test]
fn non_finite_rows_are_reported() {
    let mut x = Array2::<f32>::ones((20, 8));
    x[[7, 2]] = f32::NAN;
    let err = Umap::new(ReducerConfig::default())
        .unwrap()
        .fit_reduce(&x)
        .unwrap_err();
    assert!(matches!(err, Error::NonFinite { row: 7 }), "{err}");
}

#[test]
fn pca_plugs_into_the_same_trait() {
    let (x, truth) = gaussian_blobs(&axis_centers(2, 6, 5.0), 30, 0.3, 2);
    let reducer: Box<dyn Reducer> = Box::new(Pca::new(2));
    let y = reducer.fit_reduce(&x).unwrap();
    assert_eq!(y.dim(), (60, 2));
    assert!(nearest_label(&y, &truth) >= 0.99);
}
