use serde::{Deserialize, Serialize};

use crate::matrix::{dot, EmbeddingMatrix};

use super::kmeans::{self, KMeansParams};
use super::{check_mask, check_query, rank_cmp, CandidateMask, Hit, IndexError, TopK, DEFAULT_KMEANS_ITERS};

pub const DEFAULT_NPROBE: usize = 16;

/// `round(sqrt(rows))`, at least 1 and at most `rows`.
pub fn default_nlist(rows: usize) -> usize {
    ((rows as f64).sqrt().round() as usize).clamp(1, rows.max(1))
}

/// Training points per centroid when sampling for k-means.
pub const DEFAULT_POINTS_PER_LIST: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IvfParams {
    pub nlist: usize,
    pub seed: u64,
    pub iters: usize,
    /// `None` trains on every row.
    pub points_per_list: Option<usize>,
    pub default_nprobe: usize,
}

impl IvfParams {
    pub fn new(nlist: usize, seed: u64) -> Self {
        Self {
            nlist,
            seed,
            iters: DEFAULT_KMEANS_ITERS,
            points_per_list: Some(DEFAULT_POINTS_PER_LIST),
            default_nprobe: DEFAULT_NPROBE,
        }
    }
}

/// Inverted file: k-means centroids and, per centroid, the ascending row
/// ids assigned to it by nearest L2 distance.
#[derive(Debug, Clone, PartialEq)]
pub struct IvfIndex {
    pub(super) dim: usize,
    pub(super) centroids: Vec<f32>,
    pub(super) lists: Vec<Vec<u32>>,
    pub(super) seed: u64,
    pub(super) default_nprobe: usize,
}

impl IvfIndex {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nlist(&self) -> usize {
        self.lists.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Clamped to `nlist`.
    pub fn default_nprobe(&self) -> usize {
        self.default_nprobe.min(self.nlist())
    }

    pub fn centroid(&self, list: usize) -> &[f32] {
        &self.centroids[list * self.dim..(list + 1) * self.dim]
    }

    pub fn list(&self, list: usize) -> &[u32] {
        &self.lists[list]
    }

    pub fn num_rows(&self) -> usize {
        self.lists.iter().map(Vec::len).sum()
    }

    /// The `nprobe` lists whose centroids have the highest inner product
    /// with the query; ties go to the lower list id.
    pub fn probe(&self, query: &[f32], nprobe: usize) -> Result<Vec<usize>, IndexError> {
        if nprobe == 0 || nprobe > self.nlist() {
            return Err(IndexError::InvalidNprobe {
                nprobe,
                nlist: self.nlist(),
            });
        }
        let mut top = TopK::new(nprobe);
        for (c, centroid) in self.centroids.chunks_exact(self.dim).enumerate() {
            top.push(c as u32, dot(query, centroid));
        }
        Ok(top.into_sorted().into_iter().map(|h| h.id as usize).collect())
    }

    pub(super) fn check_rows(&self, rows: usize) -> Result<(), IndexError> {
        let index = self.num_rows();
        if index != rows {
            return Err(IndexError::RowCount { index, matrix: rows });
        }
        Ok(())
    }
}

pub fn train_ivf(matrix: &EmbeddingMatrix, params: IvfParams) -> Result<IvfIndex, IndexError> {
    let centroids = kmeans::train(
        matrix.as_slice(),
        matrix.dim(),
        KMeansParams {
            k: params.nlist,
            iters: params.iters,
            seed: params.seed,
            max_train_points: params.points_per_list.map(|p| p.saturating_mul(params.nlist)),
        },
    )?;
    let labels = kmeans::assign(matrix.as_slice(), matrix.dim(), &centroids);
    let mut lists = vec![Vec::new(); params.nlist];
    for (row, &l) in labels.iter().enumerate() {
        lists[l as usize].push(row as u32);
    }
    Ok(IvfIndex {
        dim: matrix.dim(),
        centroids,
        lists,
        seed: params.seed,
        default_nprobe: params.default_nprobe.max(1),
    })
}

/// Exact inner product over the rows of the probed lists.
pub fn search_ivf(
    index: &IvfIndex,
    matrix: &EmbeddingMatrix,
    query: &[f32],
    top: usize,
    nprobe: usize,
    mask: Option<&CandidateMask>,
) -> Result<Vec<Hit>, IndexError> {
    check_query(query, index.dim, top)?;
    if matrix.dim() != index.dim {
        return Err(IndexError::DimMismatch {
            expected: index.dim,
            got: matrix.dim(),
        });
    }
    index.check_rows(matrix.len())?;
    check_mask(mask, matrix.len())?;
    let mut topk = TopK::new(top);
    for list in index.probe(query, nprobe)? {
        for &id in index.list(list) {
            if mask.is_none_or(|m| m.contains(id as usize)) {
                topk.push(id, dot(query, matrix.row(id as usize)));
            }
        }
    }
    let hits = topk.into_sorted();
    debug_assert!(hits.windows(2).all(|w| rank_cmp(&w[0], &w[1]).is_lt()));
    Ok(hits)
}
