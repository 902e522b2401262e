//! Dense row-major embedding storage and the inner-product kernel.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MatrixError {
    #[error("embedding dimension must be at least 1")]
    ZeroDim,
    #[error("buffer of {len} values is not a multiple of dim {dim}")]
    Ragged { len: usize, dim: usize },
    #[error("row {row} has {got} values, expected {expected}")]
    RowDim { row: usize, got: usize, expected: usize },
}

/// N×d matrix of `f32` rows for one model space. Row `i` belongs to frame `i`
/// (frame granularity) or clip `i` (clip granularity).
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    data: Vec<f32>,
}

impl EmbeddingMatrix {
    pub fn new(dim: usize, data: Vec<f32>) -> Result<Self, MatrixError> {
        if dim == 0 {
            return Err(MatrixError::ZeroDim);
        }
        if data.len() % dim != 0 {
            return Err(MatrixError::Ragged { len: data.len(), dim });
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows<R: AsRef<[f32]>>(dim: usize, rows: &[R]) -> Result<Self, MatrixError> {
        if dim == 0 {
            return Err(MatrixError::ZeroDim);
        }
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(MatrixError::RowDim {
                    row: i,
                    got: row.len(),
                    expected: dim,
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of rows.
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn get(&self, i: usize) -> Option<&[f32]> {
        (i < self.len()).then(|| self.row(i))
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f32> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }
}

/// Inner product of two equal-length slices.
///
/// Every search path (flat, IVF, dedup) goes through this one kernel so that
/// scores for the same pair are bit-identical regardless of the index used.
#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0f32; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let mut tail = 0f32;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    for (x, y) in ca.zip(cb) {
        for lane in 0..8 {
            acc[lane] += x[lane] * y[lane];
        }
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// Squared L2 distance.
#[inline]
pub fn l2_sq(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0f32; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let mut tail = 0f32;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        let d = x - y;
        tail += d * d;
    }
    for (x, y) in ca.zip(cb) {
        for lane in 0..8 {
            let d = x[lane] - y[lane];
            acc[lane] += d * d;
        }
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// L2 norm, accumulated in f64.
pub fn norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt()
}

/// Scales `v` to unit length in place. Returns `false` (leaving `v`
/// untouched) when `v` is the zero vector.
pub fn normalize(v: &mut [f32]) -> bool {
    let n = norm(v);
    if n == 0.0 || !n.is_finite() {
        return false;
    }
    for x in v.iter_mut() {
        *x = (f64::from(*x) / n) as f32;
    }
    true
}

/// Result of [`normalize_rows`].
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub matrix: EmbeddingMatrix,
    /// Rows that were all zero and were left as zero.
    pub zero_rows: Vec<usize>,
}

/// Scales each nonzero row to unit L2 norm. Zero rows stay zero and are
/// reported rather than rejected.
pub fn normalize_rows(matrix: EmbeddingMatrix) -> Normalized {
    let dim = matrix.dim;
    let mut data = matrix.data;
    let mut zero_rows = Vec::new();
    for (i, row) in data.chunks_exact_mut(dim).enumerate() {
        if !normalize(row) {
            zero_rows.push(i);
        }
    }
    Normalized {
        matrix: EmbeddingMatrix { dim, data },
        zero_rows,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn three_four_five() {
        let m = EmbeddingMatrix::from_rows(2, &[[3.0, 4.0]]).unwrap();
        let out = normalize_rows(m);
        assert_eq!(out.matrix.row(0), &[0.6, 0.8]);
        assert!(out.zero_rows.is_empty());
    }

    #[test]
    fn zero_row_is_reported() {
        let m = EmbeddingMatrix::from_rows(2, &[[0.0, 0.0], [1.0, 0.0]]).unwrap();
        let out = normalize_rows(m);
        assert_eq!(out.matrix.row(0), &[0.0, 0.0]);
        assert_eq!(out.zero_rows, vec![0]);
    }

    #[test]
    fn random_rows_become_unit() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let data: Vec<f32> = (0..200 * 37).map(|_| rng.random_range(-5.0..5.0)).collect();
        let out = normalize_rows(EmbeddingMatrix::new(37, data).unwrap());
        for row in out.matrix.rows() {
            let n: f64 = row.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-6, "norm {n}");
        }
    }

    #[test]
    fn dot_matches_naive_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for len in [1, 7, 8, 9, 31, 64, 257] {
            let a: Vec<f32> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b: Vec<f32> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
            let naive: f64 = a.iter().zip(&b).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum();
            assert!((f64::from(dot(&a, &b)) - naive).abs() < 1e-5);
            let l2: f64 = a
                .iter()
                .zip(&b)
                .map(|(x, y)| (f64::from(*x) - f64::from(*y)).powi(2))
                .sum();
            assert!((f64::from(l2_sq(&a, &b)) - l2).abs() < 1e-4);
        }
    }

    #[test]
    fn shape_errors() {
        assert_eq!(EmbeddingMatrix::new(0, vec![]), Err(MatrixError::ZeroDim));
        assert_eq!(
            EmbeddingMatrix::new(3, vec![0.0; 4]),
            Err(MatrixError::Ragged { len: 4, dim: 3 })
        );
        assert!(matches!(
            EmbeddingMatrix::from_rows(2, &[vec![1.0, 2.0], vec![1.0]]),
            Err(MatrixError::RowDim { row: 1, .. })
        ));
    }
}
