//! Little-endian float files.
//!
//! Vector file: `u32 dim` then `dim` × `f32`.
//! Matrix file: `u32 rows`, `u32 cols`, then `rows * cols` × `f32`, row-major.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

pub fn encode_vector(v: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 4 * v.len());
    out.extend_from_slice(&(v.len() as u32).to_le_bytes());
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn decode_vector(bytes: &[u8]) -> Option<Vec<f32>> {
    let dim = u32::from_le_bytes(bytes.get(..4)?.try_into().ok()?) as usize;
    let body = bytes.get(4..)?;
    if body.len() != dim * 4 {
        return None;
    }
    Some(
        body.chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")))
            .collect(),
    )
}

pub fn encode_matrix(m: &Array2<f32>) -> Vec<u8> {
    let (rows, cols) = m.dim();
    let mut out = Vec::with_capacity(8 + 4 * rows * cols);
    out.extend_from_slice(&(rows as u32).to_le_bytes());
    out.extend_from_slice(&(cols as u32).to_le_bytes());
    for x in m.iter() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn decode_matrix(bytes: &[u8]) -> Option<Array2<f32>> {
    let rows = u32::from_le_bytes(bytes.get(..4)?.try_into().ok()?) as usize;
    let cols = u32::from_le_bytes(bytes.get(4..8)?.try_into().ok()?) as usize;
    let body = bytes.get(8..)?;
    if body.len() != rows * cols * 4 {
        return None;
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")))
        .collect();
    Array2::from_shape_vec((rows, cols), data).ok()
}

pub fn read_matrix(path: &Path) -> Result<Array2<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_matrix(&bytes)
        .ok_or_else(|| Error::Store(format!("corrupt matrix file {}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn matrix_bytes_round_trip(rows in 0usize..6, cols in 1usize..6, seed in any::<u64>()) {
            let data: Vec<f32> = (0..rows * cols)
                .map(|i| ((seed.wrapping_mul(i as u64 + 1) % 10_007) as f32) / 7.0 - 500.0)
                .collect();
            let m = Array2::from_shape_vec((rows, cols), data).unwrap();
            let back = decode_matrix(&encode_matrix(&m)).unwrap();
            prop_assert_eq!(back, m);
        }
    }

    #[test]
    fn vector_layout_is_dim_then_le_floats() {
        let bytes = encode_vector(&[1.0, -2.5]);
        assert_eq!(&bytes[..4], &2u32.to_le_bytes());
        assert_eq!(&bytes[4..8], &1.0f32.to_le_bytes());
        assert_eq!(decode_vector(&bytes).unwrap(), vec![1.0, -2.5]);
        assert!(decode_vector(&bytes[..7]).is_none());
    }
}
