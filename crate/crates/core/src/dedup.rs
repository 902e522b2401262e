//! Near-duplicate keyframe removal within each video.
//!
//! Frames of a video are scanned in temporal order. A frame is removed when
//! its cosine similarity with any previously *kept* frame of the same video
//! is strictly greater than `delta`; otherwise it is kept and becomes a
//! representative for later frames. Frames are never compared across videos.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Catalog, CatalogError, Granularity};
use crate::matrix::{norm, EmbeddingMatrix};

/// Threshold used when none is given.
pub const DEFAULT_DELTA: f32 = 0.9;

#[derive(Debug, Error, PartialEq)]
pub enum DedupError {
    #[error("delta {0} outside [-1, 1]")]
    DeltaOutOfRange(f32),
    #[error("dedup space {0} must have frame granularity")]
    NotFrameSpace(String),
    #[error("no embedding row for frame {0}")]
    MissingRow(u32),
    #[error("vector dims differ: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("embedding matrix has {rows} rows, catalog has {frames} frames")]
    RowCount { rows: usize, frames: usize },
    #[error(transparent)]
    Catalog(#[from] CatalogError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DedupConfig {
    pub space_id: String,
    pub delta: f32,
}

impl DedupConfig {
    pub fn new(space_id: impl Into<String>, delta: f32) -> Result<Self, DedupError> {
        if !(-1.0..=1.0).contains(&delta) {
            return Err(DedupError::DeltaOutOfRange(delta));
        }
        Ok(Self {
            space_id: space_id.into(),
            delta,
        })
    }
}

/// Cosine similarity, clamped to [-1, 1]. A zero vector has similarity 0
/// with everything, so zero rows never cause a removal.
pub fn cosine(u: &[f32], v: &[f32]) -> Result<f32, DedupError> {
    if u.len() != v.len() {
        return Err(DedupError::DimMismatch(u.len(), v.len()));
    }
    Ok(match (unit64(u), unit64(v)) {
        (Some(a), Some(b)) => unit_cosine(&a, &b),
        _ => 0.0,
    })
}

fn unit64(v: &[f32]) -> Option<Vec<f64>> {
    let n = norm(v);
    (n != 0.0 && n.is_finite()).then(|| v.iter().map(|&x| f64::from(x) / n).collect())
}

fn unit_cosine(a: &[f64], b: &[f64]) -> f32 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    d.clamp(-1.0, 1.0) as f32
}

/// A removed frame and the kept frame it duplicates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Removal {
    pub frame_id: u32,
    pub kept_by: u32,
    pub similarity: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoDedup {
    pub video_id: String,
    pub kept: Vec<u32>,
    pub removed: Vec<Removal>,
    pub pairs_examined: u64,
    /// Over examined pairs; `None` when no pair was examined.
    pub max_similarity: Option<f32>,
    pub mean_similarity: Option<f32>,
    /// Frames whose embedding is the zero vector.
    pub zero_vectors: Vec<u32>,
}

impl VideoDedup {
    pub fn removed_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.removed.iter().map(|r| r.frame_id)
    }
}

/// The greedy kept-set rule over positions `0..n`. Position `i` is removed
/// when `sim(i, k) > delta` for some earlier *kept* position `k` (checked in
/// the order they were kept); otherwise it joins the kept set. Returns, per
/// position, the kept position that removed it and the similarity.
pub fn greedy_kept_set(n: usize, delta: f32, mut sim: impl FnMut(usize, usize) -> f32) -> Vec<Option<(usize, f32)>> {
    let mut kept: Vec<usize> = Vec::new();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let dup = kept.iter().find_map(|&k| {
            let s = sim(i, k);
            (s > delta).then_some((k, s))
        });
        if dup.is_none() {
            kept.push(i);
        }
        out.push(dup);
    }
    out
}

/// Greedy kept-set dedup of one video's frames, given in temporal order.
pub fn dedup_video(
    video_id: &str,
    frame_ids: &[u32],
    matrix: &EmbeddingMatrix,
    delta: f32,
) -> Result<VideoDedup, DedupError> {
    if !(-1.0..=1.0).contains(&delta) {
        return Err(DedupError::DeltaOutOfRange(delta));
    }
    // Unit copies in f64; None for zero rows, which score 0 against anything.
    let units: Vec<Option<Vec<f64>>> = frame_ids
        .iter()
        .map(|&fid| matrix.get(fid as usize).map(unit64).ok_or(DedupError::MissingRow(fid)))
        .collect::<Result<_, _>>()?;
    let zero_vectors: Vec<u32> = frame_ids
        .iter()
        .zip(&units)
        .filter(|(_, u)| u.is_none())
        .map(|(&fid, _)| fid)
        .collect();

    let mut pairs = 0u64;
    let mut sum = 0f64;
    let mut max: Option<f32> = None;
    let decisions = greedy_kept_set(frame_ids.len(), delta, |i, k| {
        let sim = match (&units[i], &units[k]) {
            (Some(a), Some(b)) => unit_cosine(a, b),
            _ => 0.0,
        };
        pairs += 1;
        sum += f64::from(sim);
        max = Some(max.map_or(sim, |m| m.max(sim)));
        sim
    });

    let mut kept = Vec::new();
    let mut removed = Vec::new();
    for (&fid, d) in frame_ids.iter().zip(&decisions) {
        match *d {
            None => kept.push(fid),
            Some((k, similarity)) => removed.push(Removal {
                frame_id: fid,
                kept_by: frame_ids[k],
                similarity,
            }),
        }
    }

    Ok(VideoDedup {
        video_id: video_id.to_owned(),
        kept,
        removed,
        pairs_examined: pairs,
        max_similarity: max,
        mean_similarity: (pairs > 0).then(|| (sum / pairs as f64) as f32),
        zero_vectors,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DedupReport {
    pub config: DedupConfig,
    pub videos: Vec<VideoDedup>,
    pub total_frames: usize,
    pub total_removed: usize,
}

impl DedupReport {
    pub fn removed_set(&self) -> BTreeSet<u32> {
        self.videos.iter().flat_map(|v| v.removed_ids()).collect()
    }
}

/// Runs [`dedup_video`] on every video (in parallel) and returns the catalog
/// with `dedup_removed` replaced by the union of per-video removals.
pub fn dedup_catalog(
    catalog: Catalog,
    matrix: &EmbeddingMatrix,
    config: &DedupConfig,
) -> Result<(Catalog, DedupReport), DedupError> {
    let space = catalog.space(&config.space_id)?;
    if space.granularity != Granularity::Frame {
        return Err(DedupError::NotFrameSpace(config.space_id.clone()));
    }
    dedup_frames(catalog, matrix, config)
}

/// Like [`dedup_catalog`] but does not require the space to be declared in
/// the catalog; `matrix` must have one row per frame.
pub fn dedup_frames(
    catalog: Catalog,
    matrix: &EmbeddingMatrix,
    config: &DedupConfig,
) -> Result<(Catalog, DedupReport), DedupError> {
    if !(-1.0..=1.0).contains(&config.delta) {
        return Err(DedupError::DeltaOutOfRange(config.delta));
    }
    if matrix.len() != catalog.num_frames() {
        return Err(DedupError::RowCount {
            rows: matrix.len(),
            frames: catalog.num_frames(),
        });
    }
    let videos: Vec<VideoDedup> = catalog
        .videos()
        .par_iter()
        .map(|v| {
            let ids: Vec<u32> = v.frame_ids().collect();
            dedup_video(&v.video_id, &ids, matrix, config.delta)
        })
        .collect::<Result<_, _>>()?;
    let report = DedupReport {
        config: config.clone(),
        total_frames: catalog.num_frames(),
        total_removed: videos.iter().map(|v| v.removed.len()).sum(),
        videos,
    };
    let catalog = catalog.with_dedup_removed(report.removed_set())?;
    Ok((catalog, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{build_catalog, FrameMeta};

    fn planar(deg: f32) -> [f32; 2] {
        let r = deg.to_radians();
        [r.cos(), r.sin()]
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let c = cosine(&[1.0, 0.0], &planar(18.0)).unwrap();
        assert!((c - 0.9511).abs() < 1e-4);
        assert!(c > DEFAULT_DELTA);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]).unwrap(), 0.0);
        assert!(cosine(&[1.0], &[1.0, 0.0]).is_err());
        assert_eq!(cosine(&[2.0, 0.0], &[-5.0, 0.0]).unwrap(), -1.0);
    }

    /// Pairwise similarities 0->1: 0.95, 0->2: 0.2, 1->2: 0.95. Frame 1 goes
    /// (vs kept frame 0); frame 2 is compared only with frame 0 and stays.
    /// No unit vectors realize this matrix (its determinant is negative), so
    /// the rule is exercised on the similarity table directly.
    #[test]
    fn kept_set_only_comparison_on_similarity_table() {
        let table = [[1.0, 0.95, 0.2], [0.95, 1.0, 0.95], [0.2, 0.95, 1.0f32]];
        let d = greedy_kept_set(3, 0.9, |i, k| table[i][k]);
        assert_eq!(d, vec![None, Some((0, 0.95)), None]);
    }

    /// The same situation with real vectors: frame 2 is a duplicate of the
    /// removed frame 1 but not of the kept frame 0, so it survives.
    #[test]
    fn kept_set_only_comparison_on_vectors() {
        let deg = |c: f64| c.acos().to_degrees() as f32;
        let rows = [planar(0.0), planar(deg(0.95)), planar(deg(0.85))];
        let m = EmbeddingMatrix::from_rows(2, &rows).unwrap();
        assert!(cosine(m.row(1), m.row(2)).unwrap() > 0.9);
        assert!(cosine(m.row(0), m.row(2)).unwrap() < 0.9);
        let r = dedup_video("v", &[0, 1, 2], &m, 0.9).unwrap();
        assert_eq!(r.kept, vec![0, 2]);
        assert_eq!(r.removed_ids().collect::<Vec<_>>(), vec![1]);
        assert_eq!(r.removed[0].kept_by, 0);
    }

    #[test]
    fn identical_frames_collapse_to_first() {
        let m = EmbeddingMatrix::from_rows(2, &[[0.3, 0.4]; 6]).unwrap();
        let r = dedup_video("v", &[0, 1, 2, 3, 4, 5], &m, 0.9).unwrap();
        assert_eq!(r.kept, vec![0]);
        assert_eq!(r.removed.len(), 5);
    }

    #[test]
    fn delta_one_removes_nothing_distinct() {
        let rows: Vec<[f32; 2]> = (0..10).map(|i| planar(i as f32 * 0.5)).collect();
        let m = EmbeddingMatrix::from_rows(2, &rows).unwrap();
        let r = dedup_video("v", &(0..10).collect::<Vec<_>>(), &m, 1.0).unwrap();
        assert!(r.removed.is_empty());
    }

    #[test]
    fn zero_rows_never_removed_or_removing() {
        let m = EmbeddingMatrix::from_rows(2, &[[0.0, 0.0], [0.0, 0.0], [1.0, 0.0]]).unwrap();
        let r = dedup_video("v", &[0, 1, 2], &m, -1.0).unwrap();
        // cos with a zero row is 0 > -1, so with delta=-1 everything after
        // the first frame is a duplicate; with the default it is not.
        assert_eq!(r.kept, vec![0]);
        let r = dedup_video("v", &[0, 1, 2], &m, 0.9).unwrap();
        assert_eq!(r.kept, vec![0, 1, 2]);
        assert_eq!(r.zero_vectors, vec![0, 1]);
    }

    #[test]
    fn missing_row_is_an_error() {
        let m = EmbeddingMatrix::from_rows(2, &[[1.0, 0.0]]).unwrap();
        assert_eq!(dedup_video("v", &[0, 1], &m, 0.9), Err(DedupError::MissingRow(1)));
    }

    #[test]
    fn delta_validation() {
        assert!(DedupConfig::new("s", 1.5).is_err());
        assert!(DedupConfig::new("s", -1.0).is_ok());
    }

    /// Leader clustering is not set-monotone in delta: raising the threshold
    /// keeps frame 1, which then absorbs frame 2 instead of frame 3.
    #[test]
    fn raising_delta_can_change_which_frames_go() {
        let rows: Vec<[f32; 2]> = [0.0, 20.0, 36.0, 40.0].iter().map(|&d| planar(d)).collect();
        let m = EmbeddingMatrix::from_rows(2, &rows).unwrap();
        let low = dedup_video("v", &[0, 1, 2, 3], &m, 25.8f32.to_radians().cos()).unwrap();
        let high = dedup_video("v", &[0, 1, 2, 3], &m, 16.3f32.to_radians().cos()).unwrap();
        assert_eq!(low.removed_ids().collect::<Vec<_>>(), vec![1, 3]);
        assert_eq!(high.removed_ids().collect::<Vec<_>>(), vec![2]);
        assert!(high.removed.len() <= low.removed.len());
    }

    #[test]
    fn catalog_dedup_stays_within_videos() {
        let frames: Vec<FrameMeta> = ["a", "b"]
            .iter()
            .flat_map(|v| {
                (0..2).map(move |i| FrameMeta {
                    frame_id: None,
                    video_id: v.to_string(),
                    frame_index: i,
                    timestamp_ms: u64::from(i),
                    image_path: String::new(),
                })
            })
            .collect();
        let catalog = build_catalog(frames).unwrap();
        let m = EmbeddingMatrix::from_rows(2, &[[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.0, -1.0]]).unwrap();
        let cfg = DedupConfig::new("x", 0.9).unwrap();
        let (c, report) = dedup_frames(catalog, &m, &cfg).unwrap();
        assert!(c.dedup_removed().is_empty());
        assert_eq!(report.total_removed, 0);
    }

    #[test]
    fn empty_catalog() {
        let catalog = build_catalog(Vec::new()).unwrap();
        let m = EmbeddingMatrix::new(4, vec![]).unwrap();
        let (c, report) = dedup_frames(catalog, &m, &DedupConfig::new("x", 0.9).unwrap()).unwrap();
        assert!(c.dedup_removed().is_empty());
        assert!(report.videos.is_empty());
    }
}
