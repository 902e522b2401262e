//! One search call over a loaded catalog directory.
//!
//! Pipeline: class filter and dedup exclusion build a frame mask; each
//! selected space is searched (clip spaces under a derived clip mask);
//! clip hits expand to frames; per-space scores are fused at frame level;
//! hits are grouped per video.

use std::collections::{BTreeMap, BTreeSet};
use std::hash::Hasher;
use std::time::Instant;

use fixedbitset::FixedBitSet;
use fnv::FnvHasher;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Catalog, CatalogError, Granularity, ModelSpace};
use crate::filter::{
    classes_from_text, filter_frames, ClassVocabulary, FilterError, MatchMode, MatchedClass, ObjectVectors,
    QueryClassVector,
};
use crate::fusion::{fuse, FusionError, FusionMethod, FusionRequest, Normalization, ScoreVector};
use crate::index::{read_index, score_all, IndexError, SpaceIndex};
use crate::matrix::{normalize, EmbeddingMatrix};
use crate::store::{CatalogDir, StoreError, TranscriptLine};

pub const DEFAULT_TOP: usize = 100;
pub const DEFAULT_PALETTE_SIZE: usize = 12;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("space {space_id}: {source}")]
    Index { space_id: String, source: IndexError },
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error("unknown space {0}")]
    UnknownSpace(String),
    #[error("no query vector for space {0}")]
    MissingVector(String),
    #[error("query vector for space {space_id} has {got} dims, expected {expected}")]
    QueryDim {
        space_id: String,
        expected: usize,
        got: usize,
    },
    #[error("space {0} requested twice")]
    DuplicateSpace(String),
    #[error("no spaces selected")]
    NoSpaces,
    #[error("top must be at least 1")]
    InvalidTop,
    #[error("class extraction from text needs a class vocabulary in the catalog")]
    NoVocabulary,
    #[error("class extraction from text needs query text")]
    NoQueryText,
    #[error("index for space {space_id} covers {got} rows of dim {dim}, catalog expects {expected}")]
    StaleIndex {
        space_id: String,
        got: usize,
        dim: usize,
        expected: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EngineOptions {
    pub palette_size: usize,
    /// Overrides each index's stored default.
    pub nprobe: Option<usize>,
}

impl Default for EngineOptions {
    fn default() -> Self {
        Self {
            palette_size: DEFAULT_PALETTE_SIZE,
            nprobe: None,
        }
    }
}

/// How the object-class filter is chosen.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "source", content = "ids")]
pub enum ClassSelection {
    #[default]
    None,
    Ids(Vec<u32>),
    FromText,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchParams {
    pub spaces: Vec<String>,
    pub top: usize,
    pub method: FusionMethod,
    pub normalization: Normalization,
    pub classes: ClassSelection,
    pub match_mode: MatchMode,
    pub include_deduped: bool,
    /// Used for class extraction.
    pub query_text: Option<String>,
    pub nprobe: Option<usize>,
}

impl Default for SearchParams {
    fn default() -> Self {
        Self {
            spaces: Vec::new(),
            top: DEFAULT_TOP,
            method: FusionMethod::default(),
            normalization: Normalization::default(),
            classes: ClassSelection::default(),
            match_mode: MatchMode::default(),
            include_deduped: false,
            query_text: None,
            nprobe: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceScore {
    pub space_id: String,
    pub score: f32,
    /// Rank inside this space's top-T (unique-frame fusion only).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rank: Option<usize>,
    /// Set when the score was inherited from this clip.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub clip_id: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    /// 1-based position in the fused ranking.
    pub rank: usize,
    pub frame_id: u32,
    pub video_id: String,
    pub frame_index: u32,
    pub timestamp_ms: u64,
    pub image_path: String,
    pub score: f32,
    /// Spaces that actually scored this frame.
    pub spaces: Vec<SpaceScore>,
    pub clip_inherited: bool,
    pub deduped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoGroup {
    pub video_id: String,
    pub color_index: usize,
    pub hits: Vec<SearchHit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassFilterUsed {
    pub ids: Vec<u32>,
    pub mode: MatchMode,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub matched: Vec<MatchedClass>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResponse {
    pub method: FusionMethod,
    pub normalization: Normalization,
    pub total_hits: usize,
    pub candidates: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub object_classes: Option<ClassFilterUsed>,
    pub groups: Vec<VideoGroup>,
}

impl SearchResponse {
    /// Hits in fused order.
    pub fn flatten(&self) -> Vec<&SearchHit> {
        let mut hits: Vec<&SearchHit> = self.groups.iter().flat_map(|g| &g.hits).collect();
        hits.sort_by_key(|h| h.rank);
        hits
    }
}

/// Per-stage wall time in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Timings {
    pub filter_ms: f64,
    pub search_ms: f64,
    pub expand_ms: f64,
    pub fusion_ms: f64,
    pub group_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub response: SearchResponse,
    pub timings: Timings,
}

#[derive(Debug)]
pub struct LoadedSpace {
    pub space: ModelSpace,
    pub matrix: EmbeddingMatrix,
    pub index: SpaceIndex,
}

#[derive(Debug)]
pub struct Engine {
    dir: CatalogDir,
    catalog: Catalog,
    spaces: BTreeMap<String, LoadedSpace>,
    objects: ObjectVectors,
    vocabulary: Option<ClassVocabulary>,
    transcripts: BTreeMap<String, Vec<TranscriptLine>>,
    options: EngineOptions,
}

/// Stable color slot for a video: FNV-1a of the id modulo the palette size.
pub fn color_index(video_id: &str, palette_size: usize) -> usize {
    let mut h = FnvHasher::default();
    h.write(video_id.as_bytes());
    (h.finish() % palette_size.max(1) as u64) as usize
}

// Scores of one space restricted to frames.
enum FrameScores {
    /// One score per frame (exhaustive search).
    Dense(Vec<f32>),
    /// Retrieved frames only.
    Sparse(BTreeMap<u32, f32>),
}

struct SpaceResult {
    space_id: String,
    granularity: Granularity,
    scores: FrameScores,
}

impl Engine {
    pub fn open(dir: CatalogDir, options: EngineOptions) -> Result<Self, EngineError> {
        let catalog = dir.load_catalog()?;
        let mut spaces = BTreeMap::new();
        for space in catalog.spaces() {
            let matrix = dir.load_space(&catalog, &space.space_id)?;
            let path = dir.index_path(&space.space_id);
            let index = if path.is_file() {
                let index = read_index(&path).map_err(|source| EngineError::Index {
                    space_id: space.space_id.clone(),
                    source,
                })?;
                if index.dim() != matrix.dim() || index.rows() != matrix.len() {
                    return Err(EngineError::StaleIndex {
                        space_id: space.space_id.clone(),
                        got: index.rows(),
                        dim: index.dim(),
                        expected: matrix.len(),
                    });
                }
                index
            } else {
                SpaceIndex::flat(&matrix)
            };
            spaces.insert(
                space.space_id.clone(),
                LoadedSpace {
                    space: space.clone(),
                    matrix,
                    index,
                },
            );
        }
        let objects = dir.load_objects(&catalog)?;
        let vocabulary = dir.load_vocabulary()?;
        let mut transcripts: BTreeMap<String, Vec<TranscriptLine>> = BTreeMap::new();
        for t in dir.load_transcripts()? {
            transcripts.entry(t.video_id.clone()).or_default().push(t);
        }
        for lines in transcripts.values_mut() {
            lines.sort_by_key(|t| t.start_ms);
        }
        Ok(Self {
            dir,
            catalog,
            spaces,
            objects,
            vocabulary,
            transcripts,
            options,
        })
    }

    pub fn dir(&self) -> &CatalogDir {
        &self.dir
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn spaces(&self) -> impl Iterator<Item = &LoadedSpace> {
        self.spaces.values()
    }

    pub fn space(&self, space_id: &str) -> Result<&LoadedSpace, EngineError> {
        self.spaces
            .get(space_id)
            .ok_or_else(|| EngineError::UnknownSpace(space_id.to_string()))
    }

    pub fn objects(&self) -> &ObjectVectors {
        &self.objects
    }

    pub fn vocabulary(&self) -> Option<&ClassVocabulary> {
        self.vocabulary.as_ref()
    }

    pub fn options(&self) -> &EngineOptions {
        &self.options
    }

    /// Segments of one video ordered by `start_ms` (file order on ties).
    pub fn transcript(&self, video_id: &str) -> Result<&[TranscriptLine], EngineError> {
        self.catalog.video(video_id)?;
        Ok(self.transcripts.get(video_id).map_or(&[][..], Vec::as_slice))
    }

    fn class_filter(&self, params: &SearchParams) -> Result<Option<ClassFilterUsed>, EngineError> {
        let (query, matched) = match &params.classes {
            ClassSelection::None => return Ok(None),
            ClassSelection::Ids(ids) => (
                QueryClassVector::from_ids(ids, self.objects.num_classes(), params.match_mode)?,
                Vec::new(),
            ),
            ClassSelection::FromText => {
                let vocab = self.vocabulary.as_ref().ok_or(EngineError::NoVocabulary)?;
                let text = params.query_text.as_deref().ok_or(EngineError::NoQueryText)?;
                let m = classes_from_text(text, vocab, params.match_mode);
                (m.query, m.matched)
            }
        };
        Ok(Some(ClassFilterUsed {
            ids: query.ids(),
            mode: query.mode,
            matched,
        }))
    }

    /// Frames allowed by dedup exclusion and the class filter.
    fn frame_mask(&self, params: &SearchParams, classes: Option<&ClassFilterUsed>) -> Result<FixedBitSet, EngineError> {
        let n = self.catalog.num_frames();
        let mut mask = FixedBitSet::with_capacity(n);
        mask.insert_range(..);
        if !params.include_deduped {
            for &f in self.catalog.dedup_removed() {
                mask.set(f as usize, false);
            }
        }
        if let Some(c) = classes {
            let q = QueryClassVector::from_ids(&c.ids, self.objects.num_classes(), c.mode)?;
            mask.intersect_with(&filter_frames(&self.objects, &q));
        }
        Ok(mask)
    }

    /// A clip is a candidate when any of its frames is.
    fn clip_mask(&self, frames: &FixedBitSet) -> FixedBitSet {
        let mut mask = FixedBitSet::with_capacity(self.catalog.num_clips());
        for clip in self.catalog.clips() {
            let range = self.catalog.clip_frame_ids(clip.clip_id).expect("own clip");
            if range.into_iter().any(|f| frames.contains(f as usize)) {
                mask.insert(clip.clip_id as usize);
            }
        }
        mask
    }

    fn validate(
        &self,
        params: &SearchParams,
        vectors: &BTreeMap<String, Vec<f32>>,
    ) -> Result<Vec<String>, EngineError> {
        if params.top == 0 {
            return Err(EngineError::InvalidTop);
        }
        if params.spaces.is_empty() {
            return Err(EngineError::NoSpaces);
        }
        let mut seen = BTreeSet::new();
        for id in &params.spaces {
            let loaded = self.space(id)?;
            if !seen.insert(id.clone()) {
                return Err(EngineError::DuplicateSpace(id.clone()));
            }
            let v = vectors.get(id).ok_or_else(|| EngineError::MissingVector(id.clone()))?;
            if v.len() != loaded.space.dim {
                return Err(EngineError::QueryDim {
                    space_id: id.clone(),
                    expected: loaded.space.dim,
                    got: v.len(),
                });
            }
        }
        Ok(seen.into_iter().collect())
    }

    /// Runs the full pipeline. `vectors` holds one raw query vector per
    /// selected space; each is unit-normalized before use.
    pub fn search(
        &self,
        params: &SearchParams,
        vectors: &BTreeMap<String, Vec<f32>>,
    ) -> Result<SearchOutcome, EngineError> {
        let started = Instant::now();
        let mut timings = Timings::default();
        let space_ids = self.validate(params, vectors)?;

        let t = Instant::now();
        let classes = self.class_filter(params)?;
        let frame_mask = self.frame_mask(params, classes.as_ref())?;
        let clip_mask = space_ids
            .iter()
            .any(|id| self.spaces[id].space.granularity == Granularity::Clip8)
            .then(|| self.clip_mask(&frame_mask));
        let unrestricted = frame_mask.is_full();
        timings.filter_ms = ms(t);

        let t = Instant::now();
        let mut raw = Vec::with_capacity(space_ids.len());
        for id in &space_ids {
            let loaded = &self.spaces[id];
            let mut q = vectors[id].clone();
            normalize(&mut q);
            let index_err = |source| EngineError::Index {
                space_id: id.clone(),
                source,
            };
            let mask = match loaded.space.granularity {
                Granularity::Frame => &frame_mask,
                Granularity::Clip8 => clip_mask.as_ref().expect("built for clip spaces"),
            };
            let scores = if loaded.index.is_exhaustive() {
                RawScores::Dense(score_all(&loaded.matrix, &q).map_err(index_err)?)
            } else {
                let nprobe = params.nprobe.or(self
                    .options
                    .nprobe
                    .map(|p| p.clamp(1, loaded.index.ivf().map_or(1, |i| i.nlist()))));
                let mask = (!unrestricted).then_some(mask);
                let hits = loaded
                    .index
                    .search(&loaded.matrix, &q, params.top, nprobe, mask)
                    .map_err(index_err)?;
                RawScores::Sparse(hits.into_iter().map(|h| (h.id, h.score)).collect())
            };
            raw.push((id.clone(), loaded.space.granularity, scores));
        }
        timings.search_ms = ms(t);

        let t = Instant::now();
        let results: Vec<SpaceResult> = raw
            .into_iter()
            .map(|(space_id, granularity, scores)| self.to_frames(space_id, granularity, scores, &frame_mask))
            .collect::<Result<_, _>>()?;
        timings.expand_ms = ms(t);

        let t = Instant::now();
        let any_dense = results.iter().any(|r| matches!(r.scores, FrameScores::Dense(_)));
        let domain: Vec<u32> = if any_dense {
            frame_mask.ones().map(|f| f as u32).collect()
        } else {
            let mut d = BTreeSet::new();
            for r in &results {
                if let FrameScores::Sparse(m) = &r.scores {
                    d.extend(m.keys().copied());
                }
            }
            d.into_iter().collect()
        };
        let mut hits = Vec::new();
        if !domain.is_empty() {
            let vectors: Vec<ScoreVector> = results
                .iter()
                .map(|r| ScoreVector {
                    space_id: r.space_id.clone(),
                    scores: domain_scores(&r.scores, &domain),
                })
                .collect();
            let fused = fuse(&FusionRequest {
                ids: Some(domain.clone()),
                scores: vectors,
                top: params.top,
                method: params.method,
                normalization: params.normalization,
            })?;
            hits = fused.hits;
            if params.method == FusionMethod::UniqueFrame {
                // A space that retrieved fewer than `top` frames pads its
                // top-T with filler scores; those frames were never retrieved.
                hits.retain(|h| {
                    h.contributions.iter().any(|c| {
                        results.iter().any(|r| {
                            r.space_id == c.space_id
                                && match &r.scores {
                                    FrameScores::Dense(_) => true,
                                    FrameScores::Sparse(m) => m.contains_key(&h.id),
                                }
                        })
                    })
                });
            }
        }
        timings.fusion_ms = ms(t);

        let t = Instant::now();
        let mut groups: Vec<VideoGroup> = Vec::new();
        let mut group_of: BTreeMap<String, usize> = BTreeMap::new();
        for (i, fh) in hits.iter().enumerate() {
            let frame = self.catalog.frame(fh.id)?;
            let mut spaces = Vec::new();
            for r in &results {
                let Some(c) = fh.contributions.iter().find(|c| c.space_id == r.space_id) else {
                    continue;
                };
                let present = match &r.scores {
                    FrameScores::Dense(_) => true,
                    FrameScores::Sparse(m) => m.contains_key(&fh.id),
                };
                if !present {
                    continue;
                }
                let clip_id = (r.granularity == Granularity::Clip8)
                    .then(|| self.catalog.clip_of_frame(fh.id))
                    .transpose()?;
                spaces.push(SpaceScore {
                    space_id: r.space_id.clone(),
                    score: c.score,
                    rank: c.rank,
                    clip_id,
                });
            }
            let hit = SearchHit {
                rank: i + 1,
                frame_id: fh.id,
                video_id: frame.video_id.clone(),
                frame_index: frame.frame_index,
                timestamp_ms: frame.timestamp_ms,
                image_path: frame.image_path.clone(),
                score: fh.score,
                clip_inherited: spaces.iter().any(|s| s.clip_id.is_some()),
                spaces,
                deduped: self.catalog.is_removed(fh.id),
            };
            let g = *group_of.entry(frame.video_id.clone()).or_insert_with(|| {
                groups.push(VideoGroup {
                    video_id: frame.video_id.clone(),
                    color_index: color_index(&frame.video_id, self.options.palette_size),
                    hits: Vec::new(),
                });
                groups.len() - 1
            });
            groups[g].hits.push(hit);
        }
        timings.group_ms = ms(t);
        timings.total_ms = ms(started);

        Ok(SearchOutcome {
            response: SearchResponse {
                method: params.method,
                normalization: params.normalization,
                total_hits: hits.len(),
                candidates: frame_mask.count_ones(..),
                object_classes: classes,
                groups,
            },
            timings,
        })
    }

    fn to_frames(
        &self,
        space_id: String,
        granularity: Granularity,
        scores: RawScores,
        frame_mask: &FixedBitSet,
    ) -> Result<SpaceResult, EngineError> {
        let scores = match (granularity, scores) {
            (Granularity::Frame, RawScores::Dense(s)) => FrameScores::Dense(s),
            (Granularity::Frame, RawScores::Sparse(hits)) => FrameScores::Sparse(hits.into_iter().collect()),
            (Granularity::Clip8, RawScores::Dense(clip_scores)) => {
                let mut s = vec![0f32; self.catalog.num_frames()];
                for (clip, &score) in clip_scores.iter().enumerate() {
                    for f in self.catalog.clip_frame_ids(clip as u32)? {
                        s[f as usize] = score;
                    }
                }
                FrameScores::Dense(s)
            }
            (Granularity::Clip8, RawScores::Sparse(hits)) => {
                let expanded = crate::fusion::expand_clips(&hits, &self.catalog)?;
                FrameScores::Sparse(
                    expanded
                        .into_iter()
                        .filter(|e| frame_mask.contains(e.frame_id as usize))
                        .map(|e| (e.frame_id, e.score))
                        .collect(),
                )
            }
        };
        Ok(SpaceResult {
            space_id,
            granularity,
            scores,
        })
    }
}

enum RawScores {
    Dense(Vec<f32>),
    Sparse(Vec<(u32, f32)>),
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

/// Scores over `domain`. Frames a sparse space did not retrieve get a value
/// just below that space's lowest retrieved score.
fn domain_scores(scores: &FrameScores, domain: &[u32]) -> Vec<f32> {
    match scores {
        FrameScores::Dense(s) => domain.iter().map(|&f| s[f as usize]).collect(),
        FrameScores::Sparse(m) => {
            let floor = m.values().copied().fold(f32::INFINITY, f32::min);
            let floor = if floor.is_finite() { floor.next_down() } else { 0.0 };
            domain.iter().map(|f| m.get(f).copied().unwrap_or(floor)).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dedup::{dedup_catalog, DedupConfig};
    use crate::index::{search_flat, train_ivf, write_index, IvfParams};
    use crate::store::ingest;
    use crate::synth::{write_corpus, SynthSpec};

    fn fixture(seed: u64) -> (tempfile::TempDir, CatalogDir) {
        let tmp = tempfile::tempdir().unwrap();
        let manifest = write_corpus(&SynthSpec::small(seed), &tmp.path().join("in")).unwrap();
        let dir = CatalogDir::new(tmp.path().join("cat"));
        ingest(&manifest, &dir).unwrap();
        (tmp, dir)
    }

    fn query(engine: &Engine, space: &str, frame: usize) -> BTreeMap<String, Vec<f32>> {
        let v = engine.space(space).unwrap().matrix.row(frame).to_vec();
        BTreeMap::from([(space.to_string(), v)])
    }

    fn params(spaces: &[&str], top: usize) -> SearchParams {
        SearchParams {
            spaces: spaces.iter().map(|s| s.to_string()).collect(),
            top,
            ..SearchParams::default()
        }
    }

    fn ids(r: &SearchResponse) -> Vec<u32> {
        r.flatten().iter().map(|h| h.frame_id).collect()
    }

    #[test]
    fn single_space_is_flat_passthrough() {
        let (_t, dir) = fixture(1);
        let e = Engine::open(dir, EngineOptions::default()).unwrap();
        let q = query(&e, "clip", 7);
        let out = e.search(&params(&["clip"], 5), &q).unwrap().response;
        let want = search_flat(&e.space("clip").unwrap().matrix, &q["clip"], 5, None).unwrap();
        assert_eq!(ids(&out), want.iter().map(|h| h.id).collect::<Vec<_>>());
        for (h, w) in out.flatten().iter().zip(&want) {
            assert_eq!(h.score, w.score);
        }
    }

    #[test]
    fn groups_are_lossless_and_ordered() {
        let (_t, dir) = fixture(2);
        let e = Engine::open(dir, EngineOptions::default()).unwrap();
        let mut q = query(&e, "clip", 30);
        q.extend(query(&e, "blip", 30));
        let out = e.search(&params(&["clip", "blip"], 40), &q).unwrap().response;
        assert_eq!(out.total_hits, 40);
        let flat = out.flatten();
        assert_eq!(
            flat.iter().map(|h| h.rank).collect::<Vec<_>>(),
            (1..=40).collect::<Vec<_>>()
        );
        let mut best_ranks = Vec::new();
        for g in &out.groups {
            assert!(g.hits.iter().all(|h| h.video_id == g.video_id));
            assert!(g.hits.windows(2).all(|w| w[0].rank < w[1].rank));
            assert_eq!(g.color_index, color_index(&g.video_id, DEFAULT_PALETTE_SIZE));
            best_ranks.push(g.hits[0].rank);
        }
        assert!(best_ranks.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn class_filter_can_empty_the_result() {
        let (_t, dir) = fixture(3);
        let e = Engine::open(dir, EngineOptions::default()).unwrap();
        let q = query(&e, "clip", 0);
        let mut p = params(&["clip"], 10);
        p.classes = ClassSelection::Ids((0..12).collect());
        let out = e.search(&p, &q).unwrap().response;
        assert!(out.groups.is_empty());
        assert_eq!(out.total_hits, 0);
    }

    #[test]
    fn class_filter_restricts_hits() {
        let (_t, dir) = fixture(4);
        let e = Engine::open(dir, EngineOptions::default()).unwrap();
        let class = e.objects().classes(0)[0];
        let q = query(&e, "clip", 40);
        let mut p = params(&["clip", "video"], 100);
        p.classes = ClassSelection::Ids(vec![class]);
        let mut q2 = q.clone();
        q2.insert("video".into(), e.space("video").unwrap().matrix.row(1).to_vec());
        let out = e.search(&p, &q2).unwrap().response;
        assert!(out.total_hits > 0);
        for h in out.flatten() {
            assert!(e.objects().classes(h.frame_id).contains(&class), "frame {}", h.frame_id);
        }
    }

    #[test]
    fn classes_from_query_text() {
        let (_t, dir) = fixture(5);
        let e = Engine::open(dir, EngineOptions::default()).unwrap();
        let name = e
            .vocabulary()
            .unwrap()
            .name(e.objects().classes(3)[0])
            .unwrap()
            .to_string();
        let mut p = params(&["clip"], 10);
        p.classes = ClassSelection::FromText;
        p.query_text = Some(format!("Somebody near a {}!", name.to_uppercase()));
        let out = e.search(&p, &query(&e, "clip", 3)).unwrap().response;
        let used = out.object_classes.clone().unwrap();
        assert_eq!(used.matched.len(), 1);
        assert_eq!(used.matched[0].name, name);
        assert_eq!(out.flatten()[0].frame_id, 3);
    }

    #[test]
    fn dedup_removed_frames_are_excluded_unless_asked() {
        let (_t, dir) = fixture(6);
        let catalog = dir.load_catalog().unwrap();
        let m = dir.load_space(&catalog, "clip").unwrap();
        let (catalog, report) = dedup_catalog(catalog, &m, &DedupConfig::new("clip", 0.9).unwrap()).unwrap();
        assert!(report.total_removed > 0);
        dir.save_catalog(&catalog).unwrap();
        let e = Engine::open(dir, EngineOptions::default()).unwrap();
        let q = query(&e, "clip", 2);
        let out = e.search(&params(&["clip"], 65), &q).unwrap().response;
        assert_eq!(out.total_hits, 65 - report.total_removed);
        assert!(out.flatten().iter().all(|h| !h.deduped));
        let mut p = params(&["clip"], 65);
        p.include_deduped = true;
        let all = e.search(&p, &q).unwrap().response;
        assert_eq!(all.total_hits, 65);
        assert_eq!(all.flatten().iter().filter(|h| h.deduped).count(), report.total_removed);
    }

    #[test]
    fn clip_space_hits_are_inherited() {
        let (_t, dir) = fixture(7);
        let e = Engine::open(dir, EngineOptions::default()).unwrap();
        let mut q = BTreeMap::new();
        q.insert("video".to_string(), e.space("video").unwrap().matrix.row(4).to_vec());
        let out = e.search(&params(&["video"], 8), &q).unwrap().response;
        let hits = out.flatten();
        // Clip 4 is the short last tile of the 13-frame video (frames 28..33);
        // its frames share the top score and come first in id order.
        let first: Vec<u32> = hits[..5].iter().map(|h| h.frame_id).collect();
        assert_eq!(first, (28..33).collect::<Vec<_>>());
        assert!(hits[..5]
            .iter()
            .all(|h| h.spaces[0].clip_id == Some(4) && h.score == hits[0].score));
        assert!(hits.iter().all(|h| h.clip_inherited));
        assert!(hits[5].score < hits[0].score);
    }

    #[test]
    fn ivf_index_on_disk_is_used() {
        let (_t, dir) = fixture(8);
        let catalog = dir.load_catalog().unwrap();
        let m = dir.load_space(&catalog, "clip").unwrap();
        let ivf = train_ivf(&m, IvfParams::new(4, 1)).unwrap();
        write_index(&dir.index_path("clip"), &SpaceIndex::Ivf(ivf)).unwrap();
        let e = Engine::open(dir, EngineOptions::default()).unwrap();
        assert_eq!(e.space("clip").unwrap().index.kind(), "ivf");
        let q = query(&e, "clip", 11);
        let mut p = params(&["clip"], 10);
        p.nprobe = Some(4);
        let got = e.search(&p, &q).unwrap().response;
        let want = search_flat(&e.space("clip").unwrap().matrix, &q["clip"], 10, None).unwrap();
        assert_eq!(ids(&got), want.iter().map(|h| h.id).collect::<Vec<_>>());
        p.nprobe = Some(9);
        assert!(matches!(e.search(&p, &q), Err(EngineError::Index { .. })));
    }

    #[test]
    fn unique_fusion_lists_contributing_spaces() {
        let (_t, dir) = fixture(9);
        let e = Engine::open(dir, EngineOptions::default()).unwrap();
        let mut q = query(&e, "clip", 0);
        q.extend(query(&e, "blip", 50));
        let mut p = params(&["clip", "blip"], 5);
        p.method = FusionMethod::UniqueFrame;
        let out = e.search(&p, &q).unwrap().response;
        let flat = out.flatten();
        assert_eq!(flat.len(), 10);
        assert_eq!(flat[0].frame_id, 0);
        for h in &flat {
            assert!(h.spaces.iter().all(|s| s.rank.is_some_and(|r| r <= 5)));
            assert!(!h.spaces.is_empty());
        }
    }

    #[test]
    fn request_errors() {
        let (_t, dir) = fixture(10);
        let e = Engine::open(dir, EngineOptions::default()).unwrap();
        let q = query(&e, "clip", 0);
        assert!(matches!(e.search(&params(&["nope"], 5), &q), Err(EngineError::UnknownSpace(s)) if s == "nope"));
        assert!(matches!(
            e.search(&params(&["blip"], 5), &q),
            Err(EngineError::MissingVector(_))
        ));
        assert!(matches!(
            e.search(&params(&["clip", "clip"], 5), &q),
            Err(EngineError::DuplicateSpace(_))
        ));
        assert!(matches!(e.search(&params(&[], 5), &q), Err(EngineError::NoSpaces)));
        assert!(matches!(
            e.search(&params(&["clip"], 0), &q),
            Err(EngineError::InvalidTop)
        ));
        let bad = BTreeMap::from([("clip".to_string(), vec![1.0; 3])]);
        assert!(matches!(
            e.search(&params(&["clip"], 5), &bad),
            Err(EngineError::QueryDim { .. })
        ));
        let mut p = params(&["clip"], 5);
        p.classes = ClassSelection::Ids(vec![99]);
        assert!(matches!(e.search(&p, &q), Err(EngineError::Filter(_))));
    }

    #[test]
    fn transcripts_sorted_per_video() {
        let (_t, dir) = fixture(11);
        let e = Engine::open(dir, EngineOptions::default()).unwrap();
        let t = e.transcript("v002").unwrap();
        assert_eq!(t.len(), 7);
        assert!(t.windows(2).all(|w| w[0].start_ms <= w[1].start_ms));
        assert!(e.transcript("nope").is_err());
    }

    #[test]
    fn color_index_is_stable() {
        assert_eq!(color_index("v001", 12), color_index("v001", 12));
        assert!(color_index("anything", 12) < 12);
        assert_eq!(color_index("x", 1), 0);
    }
}
