//! Top-T inner-product search over an [`EmbeddingMatrix`](crate::EmbeddingMatrix).
//!
//! Three index kinds share one result contract: hits sorted by score
//! descending, ties broken by ascending row id, and an optional candidate
//! mask restricting which rows may be returned.

mod file;
mod flat;
mod ivf;
pub mod kmeans;
mod pq;

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use file::{decode_index, encode_index, read_index, write_index, SpaceIndex, INDEX_MAGIC, INDEX_VERSION};
pub use flat::{score_all, search_flat};
pub use ivf::{default_nlist, search_ivf, train_ivf, IvfIndex, IvfParams, DEFAULT_NPROBE};
pub use pq::{default_m, encode_pq, search_ivfpq, train_pq, PqCodebook, PqCodes, PqParams, PQ_KSUB};

/// Row mask: bit `i` set means row `i` is a candidate.
pub type CandidateMask = fixedbitset::FixedBitSet;

/// Default Lloyd iterations for IVF and PQ training.
pub const DEFAULT_KMEANS_ITERS: usize = 25;

#[derive(Debug, Error, PartialEq)]
pub enum IndexError {
    #[error("query has {got} dims, index expects {expected}")]
    DimMismatch { expected: usize, got: usize },
    #[error("top must be at least 1")]
    InvalidTop,
    #[error("k={k} must be between 1 and the number of training rows ({rows})")]
    InvalidK { k: usize, rows: usize },
    #[error("nprobe={nprobe} must be between 1 and nlist={nlist}")]
    InvalidNprobe { nprobe: usize, nlist: usize },
    #[error("dim {dim} is not divisible by m={m}")]
    IndivisibleDim { dim: usize, m: usize },
    #[error("m must be at least 1")]
    InvalidM,
    #[error("candidate mask covers {mask} rows, index has {rows}")]
    MaskLength { mask: usize, rows: usize },
    #[error("index covers {index} rows, matrix has {matrix}")]
    RowCount { index: usize, matrix: usize },
    #[error("query contains non-finite values")]
    NonFinite,
    #[error("index format error at byte offset {offset}: {reason}")]
    Format { offset: u64, reason: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

/// One search result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub id: u32,
    pub score: f32,
}

/// Score order used everywhere: higher score first, then lower id.
/// `-0.0 == 0.0`; NaN (never produced for finite inputs) sorts last.
#[inline]
pub fn rank_cmp(a: &Hit, b: &Hit) -> Ordering {
    let by_score = if a.score == b.score {
        Ordering::Equal
    } else if a.score.is_nan() {
        Ordering::Greater
    } else if b.score.is_nan() {
        Ordering::Less
    } else {
        b.score.total_cmp(&a.score)
    };
    by_score.then(a.id.cmp(&b.id))
}

// Heap entry ordered so that the *worst* hit is the maximum.
#[derive(Debug, Clone, Copy)]
struct Worst(Hit);

impl PartialEq for Worst {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Worst {}
impl PartialOrd for Worst {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Worst {
    fn cmp(&self, other: &Self) -> Ordering {
        rank_cmp(&self.0, &other.0)
    }
}

/// Bounded collector keeping the best `top` hits under [`rank_cmp`].
#[derive(Debug)]
pub struct TopK {
    top: usize,
    heap: BinaryHeap<Worst>,
}

impl TopK {
    pub fn new(top: usize) -> Self {
        Self {
            top,
            heap: BinaryHeap::with_capacity(top.min(1 << 16) + 1),
        }
    }

    #[inline]
    pub fn push(&mut self, id: u32, score: f32) {
        let hit = Hit { id, score };
        if self.heap.len() < self.top {
            self.heap.push(Worst(hit));
        } else if let Some(mut worst) = self.heap.peek_mut() {
            if rank_cmp(&hit, &worst.0) == Ordering::Less {
                *worst = Worst(hit);
            }
        }
    }

    pub fn into_sorted(self) -> Vec<Hit> {
        self.heap.into_sorted_vec().into_iter().map(|w| w.0).collect()
    }
}

pub(crate) fn check_query(query: &[f32], dim: usize, top: usize) -> Result<(), IndexError> {
    if query.len() != dim {
        return Err(IndexError::DimMismatch {
            expected: dim,
            got: query.len(),
        });
    }
    if top == 0 {
        return Err(IndexError::InvalidTop);
    }
    if query.iter().any(|v| !v.is_finite()) {
        return Err(IndexError::NonFinite);
    }
    Ok(())
}

pub(crate) fn check_mask(mask: Option<&CandidateMask>, rows: usize) -> Result<(), IndexError> {
    match mask {
        Some(m) if m.len() != rows => Err(IndexError::MaskLength { mask: m.len(), rows }),
        _ => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn topk_orders_and_breaks_ties_by_id() {
        let mut t = TopK::new(3);
        for (id, s) in [(5, 0.5), (1, 0.9), (3, 0.5), (2, 0.5), (4, 0.1)] {
            t.push(id, s);
        }
        let got: Vec<u32> = t.into_sorted().iter().map(|h| h.id).collect();
        assert_eq!(got, vec![1, 2, 3]);
    }

    #[test]
    fn negative_zero_ties_with_zero() {
        let a = Hit { id: 1, score: -0.0 };
        let b = Hit { id: 0, score: 0.0 };
        assert_eq!(rank_cmp(&b, &a), Ordering::Less);
        assert_eq!(rank_cmp(&a, &b), Ordering::Greater);
    }

    #[test]
    fn nan_sorts_last() {
        let a = Hit { id: 0, score: f32::NAN };
        let b = Hit { id: 1, score: -1e30 };
        assert_eq!(rank_cmp(&b, &a), Ordering::Less);
    }
}
