use serde::{Deserialize, Serialize};

use crate::matrix::{dot, EmbeddingMatrix};

use super::ivf::IvfIndex;
use super::kmeans::{self, KMeansParams};
use super::{check_mask, check_query, CandidateMask, Hit, IndexError, TopK, DEFAULT_KMEANS_ITERS};

/// Centroids per subspace (one byte per code).
pub const PQ_KSUB: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PqParams {
    pub m: usize,
    pub seed: u64,
    pub iters: usize,
    pub max_train_points: Option<usize>,
}

/// The largest divisor of `dim` that is at most `dim / 8` (at least 1).
pub fn default_m(dim: usize) -> usize {
    (1..=(dim / 8).max(1)).rev().find(|m| dim % m == 0).unwrap_or(1)
}

impl PqParams {
    pub fn new(m: usize, seed: u64) -> Self {
        Self {
            m,
            seed,
            iters: DEFAULT_KMEANS_ITERS,
            max_train_points: Some(64 * PQ_KSUB),
        }
    }
}

/// Per-subspace codebooks over raw vectors: `m` blocks of `ksub` centroids,
/// each `dim / m` wide.
#[derive(Debug, Clone, PartialEq)]
pub struct PqCodebook {
    pub(super) dim: usize,
    pub(super) m: usize,
    pub(super) ksub: usize,
    pub(super) seed: u64,
    pub(super) centroids: Vec<f32>,
}

/// One `m`-byte code per row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PqCodes {
    pub(super) m: usize,
    pub(super) codes: Vec<u8>,
}

impl PqCodes {
    pub fn len(&self) -> usize {
        self.codes.len() / self.m
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn code(&self, row: usize) -> &[u8] {
        &self.codes[row * self.m..(row + 1) * self.m]
    }
}

impl PqCodebook {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn ksub(&self) -> usize {
        self.ksub
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dsub(&self) -> usize {
        self.dim / self.m
    }

    pub fn centroid(&self, sub: usize, code: usize) -> &[f32] {
        let dsub = self.dsub();
        let start = (sub * self.ksub + code) * dsub;
        &self.centroids[start..start + dsub]
    }

    /// `lut[s * ksub + c]` is the inner product of query subvector `s` with
    /// centroid `c` of subspace `s`.
    pub fn lut(&self, query: &[f32]) -> Vec<f32> {
        let dsub = self.dsub();
        let mut lut = Vec::with_capacity(self.m * self.ksub);
        for (s, q) in query.chunks_exact(dsub).enumerate() {
            lut.extend((0..self.ksub).map(|c| dot(q, self.centroid(s, c))));
        }
        lut
    }

    /// Approximate score of one code from a precomputed table.
    #[inline]
    pub fn adc(&self, lut: &[f32], code: &[u8]) -> f32 {
        code.iter()
            .enumerate()
            .map(|(s, &c)| lut[s * self.ksub + c as usize])
            .sum()
    }

    pub fn reconstruct(&self, code: &[u8]) -> Vec<f32> {
        code.iter()
            .enumerate()
            .flat_map(|(s, &c)| self.centroid(s, c as usize).iter().copied())
            .collect()
    }

    pub fn encode_row(&self, row: &[f32]) -> Vec<u8> {
        let dsub = self.dsub();
        row.chunks_exact(dsub)
            .enumerate()
            .map(|(s, sub)| {
                let block = &self.centroids[s * self.ksub * dsub..(s + 1) * self.ksub * dsub];
                kmeans::nearest(sub, block, dsub).0 as u8
            })
            .collect()
    }
}

/// Trains one codebook per subspace with `ksub = min(256, training rows)`.
pub fn train_pq(matrix: &EmbeddingMatrix, params: PqParams) -> Result<PqCodebook, IndexError> {
    let (dim, m) = (matrix.dim(), params.m);
    if m == 0 {
        return Err(IndexError::InvalidM);
    }
    if dim % m != 0 {
        return Err(IndexError::IndivisibleDim { dim, m });
    }
    let n = matrix.len();
    let train_rows = params.max_train_points.map_or(n, |cap| cap.min(n));
    let ksub = PQ_KSUB.min(train_rows);
    if ksub == 0 {
        return Err(IndexError::InvalidK { k: 0, rows: 0 });
    }
    let dsub = dim / m;
    let mut centroids = Vec::with_capacity(m * ksub * dsub);
    for s in 0..m {
        let sub: Vec<f32> = matrix
            .rows()
            .flat_map(|r| r[s * dsub..(s + 1) * dsub].iter().copied())
            .collect();
        centroids.extend(kmeans::train(
            &sub,
            dsub,
            KMeansParams {
                k: ksub,
                iters: params.iters,
                seed: params.seed.wrapping_add(s as u64),
                max_train_points: params.max_train_points,
            },
        )?);
    }
    Ok(PqCodebook {
        dim,
        m,
        ksub,
        seed: params.seed,
        centroids,
    })
}

pub fn encode_pq(codebook: &PqCodebook, matrix: &EmbeddingMatrix) -> Result<PqCodes, IndexError> {
    if matrix.dim() != codebook.dim {
        return Err(IndexError::DimMismatch {
            expected: codebook.dim,
            got: matrix.dim(),
        });
    }
    use rayon::prelude::*;
    let per_row: Vec<Vec<u8>> = matrix
        .as_slice()
        .par_chunks_exact(codebook.dim)
        .map(|row| codebook.encode_row(row))
        .collect();
    Ok(PqCodes {
        m: codebook.m,
        codes: per_row.concat(),
    })
}

/// IVF probing with asymmetric-distance scoring of PQ codes.
pub fn search_ivfpq(
    ivf: &IvfIndex,
    codebook: &PqCodebook,
    codes: &PqCodes,
    query: &[f32],
    top: usize,
    nprobe: usize,
    mask: Option<&CandidateMask>,
) -> Result<Vec<Hit>, IndexError> {
    check_query(query, ivf.dim(), top)?;
    if codebook.dim != ivf.dim() {
        return Err(IndexError::DimMismatch {
            expected: ivf.dim(),
            got: codebook.dim,
        });
    }
    ivf.check_rows(codes.len())?;
    check_mask(mask, codes.len())?;
    let lut = codebook.lut(query);
    let mut topk = TopK::new(top);
    for list in ivf.probe(query, nprobe)? {
        for &id in ivf.list(list) {
            if mask.is_none_or(|m| m.contains(id as usize)) {
                topk.push(id, codebook.adc(&lut, codes.code(id as usize)));
            }
        }
    }
    Ok(topk.into_sorted())
}
