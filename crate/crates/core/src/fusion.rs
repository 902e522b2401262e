//! Late fusion of per-space score vectors, and clip-to-frame expansion.
//!
//! Score vectors are put in ascending `space_id` order before anything is
//! computed, so results do not depend on the order spaces were listed in.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Catalog, CatalogError};
use crate::index::TopK;

#[derive(Debug, Error, PartialEq)]
pub enum FusionError {
    #[error("no score vectors to fuse")]
    Empty,
    #[error("top must be at least 1")]
    InvalidTop,
    #[error("score vector for {space_id} has {got} entries, expected {expected}")]
    LengthMismatch {
        space_id: String,
        got: usize,
        expected: usize,
    },
    #[error("space {0} listed twice")]
    DuplicateSpace(String),
    #[error("candidate ids must be strictly ascending")]
    IdsNotAscending,
    #[error(transparent)]
    Catalog(#[from] CatalogError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMethod {
    #[default]
    #[serde(alias = "sum")]
    SumConfidence,
    #[serde(alias = "unique")]
    UniqueFrame,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    #[default]
    None,
    #[serde(alias = "minmax")]
    MinMax,
}

/// Scores of one space over the shared candidate domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub space_id: String,
    pub scores: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionRequest {
    /// Candidate id for each position, strictly ascending. `None` means
    /// position `i` is id `i`.
    pub ids: Option<Vec<u32>>,
    pub scores: Vec<ScoreVector>,
    pub top: usize,
    pub method: FusionMethod,
    pub normalization: Normalization,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    pub space_id: String,
    /// After normalization, if any.
    pub score: f32,
    /// 1-based rank within this space's top-T; `None` when outside it.
    pub rank: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedHit {
    pub id: u32,
    /// Summed score, or for unique-frame fusion the best contributing score.
    pub score: f32,
    /// 1-based fused position (sum) or best per-space rank (unique).
    pub best_rank: usize,
    pub contributions: Vec<Contribution>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedResult {
    pub method: FusionMethod,
    pub hits: Vec<FusedHit>,
}

/// Rescales to `[0, 1]`; a constant vector maps to all zeros.
pub fn min_max(scores: &[f32]) -> Vec<f32> {
    let (lo, hi) = scores.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &s| {
        (lo.min(s), hi.max(s))
    });
    if hi <= lo {
        return vec![0.0; scores.len()];
    }
    let span = hi - lo;
    scores.iter().map(|&s| (s - lo) / span).collect()
}

struct Prepared {
    ids: Vec<u32>,
    spaces: Vec<ScoreVector>,
}

fn prepare(req: &FusionRequest) -> Result<Prepared, FusionError> {
    if req.top == 0 {
        return Err(FusionError::InvalidTop);
    }
    let first = req.scores.first().ok_or(FusionError::Empty)?;
    let n = first.scores.len();
    let mut spaces = req.scores.clone();
    spaces.sort_by(|a, b| a.space_id.cmp(&b.space_id));
    for w in spaces.windows(2) {
        if w[0].space_id == w[1].space_id {
            return Err(FusionError::DuplicateSpace(w[0].space_id.clone()));
        }
    }
    for s in &spaces {
        if s.scores.len() != n {
            return Err(FusionError::LengthMismatch {
                space_id: s.space_id.clone(),
                got: s.scores.len(),
                expected: n,
            });
        }
    }
    let ids = match &req.ids {
        Some(ids) => {
            if ids.len() != n {
                return Err(FusionError::LengthMismatch {
                    space_id: "ids".into(),
                    got: ids.len(),
                    expected: n,
                });
            }
            if ids.windows(2).any(|w| w[0] >= w[1]) {
                return Err(FusionError::IdsNotAscending);
            }
            ids.clone()
        }
        None => (0..n as u32).collect(),
    };
    if req.normalization == Normalization::MinMax {
        for s in &mut spaces {
            s.scores = min_max(&s.scores);
        }
    }
    Ok(Prepared { ids, spaces })
}

/// Positions of the top-`top` scores of one space, best first.
fn top_positions(scores: &[f32], ids: &[u32], top: usize) -> Vec<(usize, u32)> {
    // TopK breaks ties by ascending id; positions are ascending with ids.
    let mut t = TopK::new(top);
    for (pos, &s) in scores.iter().enumerate() {
        t.push(pos as u32, s);
    }
    t.into_sorted()
        .into_iter()
        .map(|h| (h.id as usize, ids[h.id as usize]))
        .collect()
}

/// Sum of scores per candidate, top-`top` by sum, ties by ascending id.
/// Sums are accumulated in `f32` in ascending `space_id` order.
pub fn fuse_sum(req: &FusionRequest) -> Result<FusedResult, FusionError> {
    let p = prepare(req)?;
    let n = p.ids.len();
    let mut sums = vec![0f32; n];
    for s in &p.spaces {
        for (acc, &v) in sums.iter_mut().zip(&s.scores) {
            *acc += v;
        }
    }
    let hits = top_positions(&sums, &p.ids, req.top)
        .into_iter()
        .enumerate()
        .map(|(rank, (pos, id))| FusedHit {
            id,
            score: sums[pos],
            best_rank: rank + 1,
            contributions: p
                .spaces
                .iter()
                .map(|s| Contribution {
                    space_id: s.space_id.clone(),
                    score: s.scores[pos],
                    rank: None,
                })
                .collect(),
        })
        .collect();
    Ok(FusedResult {
        method: FusionMethod::SumConfidence,
        hits,
    })
}

/// Union of every space's top-`top` set, ordered by best per-space rank and
/// then ascending id. Each hit lists only the spaces whose top-T contain it.
pub fn fuse_unique(req: &FusionRequest) -> Result<FusedResult, FusionError> {
    let p = prepare(req)?;
    let mut entries: std::collections::BTreeMap<usize, Vec<Contribution>> = Default::default();
    for s in &p.spaces {
        for (rank, (pos, _)) in top_positions(&s.scores, &p.ids, req.top).into_iter().enumerate() {
            entries.entry(pos).or_default().push(Contribution {
                space_id: s.space_id.clone(),
                score: s.scores[pos],
                rank: Some(rank + 1),
            });
        }
    }
    let mut hits: Vec<FusedHit> = entries
        .into_iter()
        .map(|(pos, contributions)| {
            let best_rank = contributions.iter().filter_map(|c| c.rank).min().expect("non-empty");
            let score = contributions
                .iter()
                .filter(|c| c.rank == Some(best_rank))
                .map(|c| c.score)
                .fold(f32::NEG_INFINITY, f32::max);
            FusedHit {
                id: p.ids[pos],
                score,
                best_rank,
                contributions,
            }
        })
        .collect();
    hits.sort_by(|a, b| a.best_rank.cmp(&b.best_rank).then(a.id.cmp(&b.id)));
    Ok(FusedResult {
        method: FusionMethod::UniqueFrame,
        hits,
    })
}

pub fn fuse(req: &FusionRequest) -> Result<FusedResult, FusionError> {
    match req.method {
        FusionMethod::SumConfidence => fuse_sum(req),
        FusionMethod::UniqueFrame => fuse_unique(req),
    }
}

/// One frame produced by expanding a clip hit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpandedFrame {
    pub frame_id: u32,
    pub clip_id: u32,
    pub score: f32,
}

/// Replaces each clip by its frames in order; frames inherit the clip score.
pub fn expand_clips(clips: &[(u32, f32)], catalog: &Catalog) -> Result<Vec<ExpandedFrame>, FusionError> {
    let mut out = Vec::new();
    for &(clip_id, score) in clips {
        let frames = catalog.clip_frame_ids(clip_id)?;
        out.extend(frames.map(|frame_id| ExpandedFrame {
            frame_id,
            clip_id,
            score,
        }));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{FrameMeta, Granularity, ModelSpace};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sv(id: &str, scores: &[f32]) -> ScoreVector {
        ScoreVector {
            space_id: id.into(),
            scores: scores.to_vec(),
        }
    }

    fn req(scores: Vec<ScoreVector>, top: usize, method: FusionMethod) -> FusionRequest {
        FusionRequest {
            ids: None,
            scores,
            top,
            method,
            normalization: Normalization::None,
        }
    }

    fn ids(r: &FusedResult) -> Vec<u32> {
        r.hits.iter().map(|h| h.id).collect()
    }

    #[test]
    fn full_tie_goes_to_lowest_id() {
        let r = fuse_sum(&req(
            vec![sv("a", &[0.9, 0.1, 0.5]), sv("b", &[0.1, 0.9, 0.5])],
            1,
            FusionMethod::SumConfidence,
        ))
        .unwrap();
        assert_eq!(ids(&r), vec![0]);
        assert_eq!(r.hits[0].score, 1.0);
    }

    #[test]
    fn single_space_is_identity() {
        let s = [0.3, 0.7, 0.1, 0.7, 0.5];
        let r = fuse_sum(&req(vec![sv("a", &s)], 3, FusionMethod::SumConfidence)).unwrap();
        assert_eq!(ids(&r), vec![1, 3, 4]);
    }

    #[test]
    fn unique_overlap_bounds() {
        let s = [0.3, 0.7, 0.1, 0.9];
        let same = fuse_unique(&req(vec![sv("a", &s), sv("b", &s)], 2, FusionMethod::UniqueFrame)).unwrap();
        assert_eq!(ids(&same), vec![3, 1]);
        assert!(same.hits.iter().all(|h| h.contributions.len() == 2));
        let disjoint = fuse_unique(&req(
            vec![sv("a", &[1.0, 0.9, 0.0, 0.0]), sv("b", &[0.0, 0.0, 0.8, 0.7])],
            2,
            FusionMethod::UniqueFrame,
        ))
        .unwrap();
        // Ranks: 0 and 2 are rank 1; 1 and 3 are rank 2.
        assert_eq!(ids(&disjoint), vec![0, 2, 1, 3]);
    }

    #[test]
    fn errors() {
        assert_eq!(
            fuse_sum(&req(vec![], 1, FusionMethod::SumConfidence)),
            Err(FusionError::Empty)
        );
        assert!(matches!(
            fuse_sum(&req(
                vec![sv("a", &[1.0]), sv("b", &[1.0, 2.0])],
                1,
                FusionMethod::SumConfidence
            )),
            Err(FusionError::LengthMismatch { .. })
        ));
        assert_eq!(
            fuse_unique(&req(
                vec![sv("a", &[1.0]), sv("a", &[1.0])],
                1,
                FusionMethod::UniqueFrame
            )),
            Err(FusionError::DuplicateSpace("a".into()))
        );
        assert_eq!(
            fuse_sum(&req(vec![sv("a", &[1.0])], 0, FusionMethod::SumConfidence)),
            Err(FusionError::InvalidTop)
        );
        let mut r = req(vec![sv("a", &[1.0, 2.0])], 1, FusionMethod::SumConfidence);
        r.ids = Some(vec![5, 5]);
        assert_eq!(fuse_sum(&r), Err(FusionError::IdsNotAscending));
    }

    #[test]
    fn explicit_ids_are_reported() {
        let mut r = req(vec![sv("a", &[0.1, 0.9, 0.5])], 2, FusionMethod::SumConfidence);
        r.ids = Some(vec![10, 20, 30]);
        assert_eq!(ids(&fuse_sum(&r).unwrap()), vec![20, 30]);
    }

    #[test]
    fn min_max_basics() {
        assert_eq!(min_max(&[2.0, 4.0, 3.0]), vec![0.0, 1.0, 0.5]);
        assert_eq!(min_max(&[7.0, 7.0]), vec![0.0, 0.0]);
    }

    fn random_request(rng: &mut ChaCha8Rng, models: usize, n: usize, top: usize) -> FusionRequest {
        let scores = (0..models)
            .map(|m| {
                sv(
                    &format!("m{m}"),
                    &(0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f32>>(),
                )
            })
            .collect();
        req(scores, top, FusionMethod::SumConfidence)
    }

    #[test]
    fn sum_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r = random_request(&mut rng, 3, 1000, 50);
        let mut sums: Vec<(u32, f32)> = (0..1000)
            .map(|i| (i as u32, r.scores.iter().fold(0f32, |acc, s| acc + s.scores[i])))
            .collect();
        sums.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let want: Vec<u32> = sums.iter().take(50).map(|s| s.0).collect();
        assert_eq!(ids(&fuse_sum(&r).unwrap()), want);
    }

    #[test]
    fn permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut r = random_request(&mut rng, 4, 200, 20);
        let a = fuse_sum(&r).unwrap();
        let u = fuse_unique(&r).unwrap();
        r.scores.reverse();
        assert_eq!(fuse_sum(&r).unwrap(), a);
        assert_eq!(fuse_unique(&r).unwrap(), u);
    }

    #[test]
    fn expand_clip_ranges() {
        let frames: Vec<FrameMeta> = [("a", 16), ("b", 20)]
            .iter()
            .flat_map(|&(v, n)| {
                (0..n).map(move |i| FrameMeta {
                    frame_id: None,
                    video_id: v.into(),
                    frame_index: i,
                    timestamp_ms: u64::from(i) * 40,
                    image_path: format!("{v}/{i}.jpg"),
                })
            })
            .collect();
        let catalog = crate::catalog::CatalogBuilder::new()
            .space(ModelSpace::new("c", 2, Granularity::Clip8))
            .build(frames)
            .unwrap();
        let first: Vec<u32> = expand_clips(&[(0, 1.0)], &catalog)
            .unwrap()
            .iter()
            .map(|e| e.frame_id)
            .collect();
        assert_eq!(first, (0..8).collect::<Vec<_>>());
        // Clips: a -> 0,1; b -> 2 (16..24), 3 (24..32), 4 (32..36).
        let last: Vec<u32> = expand_clips(&[(4, 1.0)], &catalog)
            .unwrap()
            .iter()
            .map(|e| e.frame_id)
            .collect();
        assert_eq!(last, (32..36).collect::<Vec<_>>());
        let ordered = expand_clips(&[(3, 0.9), (1, 0.4)], &catalog).unwrap();
        let got: Vec<(u32, f32)> = ordered.iter().map(|e| (e.frame_id, e.score)).collect();
        let want: Vec<(u32, f32)> = (24..32).map(|f| (f, 0.9)).chain((8..16).map(|f| (f, 0.4))).collect();
        assert_eq!(got, want);
        assert!(matches!(
            expand_clips(&[(99, 1.0)], &catalog),
            Err(FusionError::Catalog(_))
        ));
    }
}
