use nalgebra::DMatrix;
use ndarray::Array2;

use super::{to_f64_checked, Reducer};
use crate::error::{Error, Result};

/// Principal component projection. Component signs are fixed so the
/// largest-magnitude loading of each component is positive.
#[derive(Debug, Clone, Copy)]
pub struct Pca {
    pub n_components: usize,
}

impl Pca {
    pub fn new(n_components: usize) -> Self {
        Pca { n_components }
    }
}

impl Reducer for Pca {
    fn fit_reduce(&self, embeddings: &Array2<f32>) -> Result<Array2<f32>> {
        let (n, d) = embeddings.dim();
        let k = self.n_components;
        if k == 0 || k > d {
            return Err(Error::InvalidParameter(format!(
                "n_components {k} must be in 1..={d}"
            )));
        }
        if n < 2 {
            return Err(Error::InsufficientData {
                needed: 1,
                actual: n,
            });
        }
        let x = to_f64_checked(embeddings)?;
        let mean = x.mean_axis(ndarray::Axis(0)).expect("n >= 2");
        let centered = DMatrix::from_fn(n, d, |i, j| x[[i, j]] - mean[j]);

        let svd = centered.clone().svd(false, true);
        let v_t = svd.v_t.expect("requested V^T");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&p, &q| {
            svd.singular_values[q]
                .total_cmp(&svd.singular_values[p])
                .then(p.cmp(&q))
        });

        let mut out = Array2::<f32>::zeros((n, k));
        for (c, &comp) in order.iter().take(k).enumerate() {
            let axis = v_t.row(comp);
            let pivot = axis
                .iter()
                .copied()
                .fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
            let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
            for i in 0..n {
                let proj: f64 = (0..d).map(|j| centered[(i, j)] * axis[j]).sum();
                out[[i, c]] = (sign * proj) as f32;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_component_follows_the_long_axis() {
        // points on the line y = 2x with a tiny orthogonal wobble
        let pts: Vec<f32> = (0..10)
            .flat_map(|i| {
                let t = i as f32;
                let w = if i % 2 == 0 { 0.01 } else { -0.01 };
                [t + 2.0 * w, 2.0 * t - w]
            })
            .collect();
        let x = Array2::from_shape_vec((10, 2), pts).unwrap();
        let y = Pca::new(1).fit_reduce(&x).unwrap();
        let spread = y.column(0).iter().fold(0.0f32, |m, v| m.max(v.abs()));
        // half-length of the segment is 4.5 * sqrt(5)
        assert!((spread - 4.5 * 5f32.sqrt()).abs() < 1e-2);
    }
}
