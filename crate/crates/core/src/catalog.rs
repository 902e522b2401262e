//! Frame, clip, video and model-space catalog.
//!
//! Frame ids are dense `0..N` in ingest order (videos in manifest order,
//! frames in temporal order), so every video owns a contiguous frame-id range
//! and a contiguous clip-id range. Clips tile each video's frames in groups of
//! [`CLIP_LEN`]; the last clip of a video may be short.

use std::collections::{BTreeSet, HashMap};
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Frames per clip for clip-granularity spaces.
pub const CLIP_LEN: usize = 8;

/// Default neighbor radius for frame inspection.
pub const DEFAULT_NEIGHBOR_RADIUS: usize = 4;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CatalogError {
    #[error("duplicate frame (video_id={video_id}, frame_index={frame_index})")]
    DuplicateFrame { video_id: String, frame_index: u32 },
    #[error(
        "decreasing timestamp in video {video_id} at frame_index {frame_index}: {timestamp_ms} ms after {previous_ms} ms"
    )]
    DecreasingTimestamp {
        video_id: String,
        frame_index: u32,
        timestamp_ms: u64,
        previous_ms: u64,
    },
    #[error("video {video_id}: frame_index {frame_index} out of order, expected {expected}")]
    FrameIndexGap {
        video_id: String,
        frame_index: u32,
        expected: u32,
    },
    #[error("frames of video {0} are not contiguous in the input")]
    VideoNotContiguous(String),
    #[error("frame carries frame_id {given} but ingest order assigns {assigned}")]
    FrameIdMismatch { given: u32, assigned: u32 },
    #[error("video {0} is not listed in the manifest")]
    UnlistedVideo(String),
    #[error("video {0} is listed twice")]
    DuplicateVideo(String),
    #[error("frames of video {0} appear out of manifest order")]
    VideoOrder(String),
    #[error("duplicate model space {0}")]
    DuplicateSpace(String),
    #[error("invalid model space {space_id}: {reason}")]
    InvalidSpace { space_id: String, reason: String },
    #[error("unknown frame {0}")]
    UnknownFrame(u32),
    #[error("unknown clip {0}")]
    UnknownClip(u32),
    #[error("unknown video {0}")]
    UnknownVideo(String),
    #[error("unknown model space {0}")]
    UnknownSpace(String),
    #[error("inconsistent catalog: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    /// One row per keyframe.
    Frame,
    /// One row per tile of up to eight consecutive keyframes.
    Clip8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Vectors are unit-normalized at ingest, so this is cosine similarity.
    #[default]
    InnerProduct,
}

/// A named embedding family.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpace {
    pub space_id: String,
    pub dim: usize,
    pub granularity: Granularity,
    #[serde(default)]
    pub metric: Metric,
}

impl ModelSpace {
    pub fn new(space_id: impl Into<String>, dim: usize, granularity: Granularity) -> Self {
        Self {
            space_id: space_id.into(),
            dim,
            granularity,
            metric: Metric::InnerProduct,
        }
    }
}

/// Space ids double as file names, so they are restricted to a safe token set.
pub fn is_valid_token(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 128
        && id
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'_' | b'-' | b'.'))
        && !id.starts_with('.')
}

/// Frame metadata as it arrives from upstream keyframe extraction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_id: Option<u32>,
    pub video_id: String,
    pub frame_index: u32,
    pub timestamp_ms: u64,
    pub image_path: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame_id: u32,
    pub video_id: String,
    pub frame_index: u32,
    pub timestamp_ms: u64,
    pub image_path: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipRecord {
    pub clip_id: u32,
    pub video_id: String,
    pub start_frame_index: u32,
    /// Inclusive.
    pub end_frame_index: u32,
}

impl ClipRecord {
    pub fn len(&self) -> usize {
        (self.end_frame_index - self.start_frame_index) as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoEntry {
    pub video_id: String,
    pub frame_count: u32,
    pub first_frame_id: u32,
    pub first_clip_id: u32,
    /// Relative path of the playable source video, if known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub video_path: Option<String>,
}

impl VideoEntry {
    pub fn frame_ids(&self) -> Range<u32> {
        self.first_frame_id..self.first_frame_id + self.frame_count
    }

    pub fn clip_count(&self) -> u32 {
        (self.frame_count as usize).div_ceil(CLIP_LEN) as u32
    }

    pub fn clip_ids(&self) -> Range<u32> {
        self.first_clip_id..self.first_clip_id + self.clip_count()
    }
}

/// A video as declared in the ingest manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VideoSpec {
    Id(String),
    Entry {
        video_id: String,
        #[serde(default)]
        video_path: Option<String>,
    },
}

impl VideoSpec {
    pub fn video_id(&self) -> &str {
        match self {
            VideoSpec::Id(id) => id,
            VideoSpec::Entry { video_id, .. } => video_id,
        }
    }

    pub fn video_path(&self) -> Option<&str> {
        match self {
            VideoSpec::Id(_) => None,
            VideoSpec::Entry { video_path, .. } => video_path.as_deref(),
        }
    }
}

/// Serialized form of [`Catalog`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogParts {
    pub videos: Vec<VideoEntry>,
    pub frames: Vec<FrameRecord>,
    pub clips: Vec<ClipRecord>,
    pub spaces: Vec<ModelSpace>,
    #[serde(default)]
    pub dedup_removed: BTreeSet<u32>,
}

/// Immutable catalog of videos, frames, clips and model spaces.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "CatalogParts", into = "CatalogParts")]
pub struct Catalog {
    videos: Vec<VideoEntry>,
    frames: Vec<FrameRecord>,
    clips: Vec<ClipRecord>,
    spaces: Vec<ModelSpace>,
    dedup_removed: BTreeSet<u32>,
    video_lookup: HashMap<String, usize>,
    space_lookup: HashMap<String, usize>,
}

impl From<Catalog> for CatalogParts {
    fn from(c: Catalog) -> Self {
        CatalogParts {
            videos: c.videos,
            frames: c.frames,
            clips: c.clips,
            spaces: c.spaces,
            dedup_removed: c.dedup_removed,
        }
    }
}

impl TryFrom<CatalogParts> for Catalog {
    type Error = CatalogError;

    fn try_from(p: CatalogParts) -> Result<Self, CatalogError> {
        let catalog = Catalog {
            video_lookup: p
                .videos
                .iter()
                .enumerate()
                .map(|(i, v)| (v.video_id.clone(), i))
                .collect(),
            space_lookup: p
                .spaces
                .iter()
                .enumerate()
                .map(|(i, s)| (s.space_id.clone(), i))
                .collect(),
            videos: p.videos,
            frames: p.frames,
            clips: p.clips,
            spaces: p.spaces,
            dedup_removed: p.dedup_removed,
        };
        catalog.validate()?;
        Ok(catalog)
    }
}

impl std::fmt::Display for Catalog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} videos, {} frames, {} clips, {} spaces, {} deduped",
            self.videos.len(),
            self.frames.len(),
            self.clips.len(),
            self.spaces.len(),
            self.dedup_removed.len()
        )
    }
}

/// One entry of a [`Catalog::neighbors`] result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Neighbor {
    pub frame_id: u32,
    pub is_anchor: bool,
}

/// Builds a [`Catalog`] from a temporally ordered frame stream.
#[derive(Debug, Clone, Default)]
pub struct CatalogBuilder {
    videos: Option<Vec<VideoSpec>>,
    spaces: Vec<ModelSpace>,
}

impl CatalogBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Declares the video order. Videos without frames are kept with zero
    /// frames; frames of unlisted videos are rejected.
    pub fn videos(mut self, videos: Vec<VideoSpec>) -> Self {
        self.videos = Some(videos);
        self
    }

    pub fn space(mut self, space: ModelSpace) -> Self {
        self.spaces.push(space);
        self
    }

    pub fn spaces(mut self, spaces: impl IntoIterator<Item = ModelSpace>) -> Self {
        self.spaces.extend(spaces);
        self
    }

    pub fn build<I>(self, frames: I) -> Result<Catalog, CatalogError>
    where
        I: IntoIterator<Item = FrameMeta>,
    {
        let mut records: Vec<FrameRecord> = Vec::new();
        // (video_id, frame_count, first_frame_id) in order of appearance
        let mut seen: Vec<(String, u32, u32)> = Vec::new();
        let mut seen_lookup: HashMap<String, usize> = HashMap::new();
        let mut last_ts = 0u64;

        for meta in frames {
            let assigned = records.len() as u32;
            if let Some(given) = meta.frame_id {
                if given != assigned {
                    return Err(CatalogError::FrameIdMismatch { given, assigned });
                }
            }
            let current = seen.last().map(|(id, _, _)| id.as_str());
            if current != Some(meta.video_id.as_str()) {
                if seen_lookup.contains_key(&meta.video_id) {
                    return Err(CatalogError::VideoNotContiguous(meta.video_id));
                }
                seen_lookup.insert(meta.video_id.clone(), seen.len());
                seen.push((meta.video_id.clone(), 0, assigned));
                last_ts = 0;
            }
            let entry = seen.last_mut().expect("pushed above");
            let expected = entry.1;
            if meta.frame_index < expected {
                return Err(CatalogError::DuplicateFrame {
                    video_id: meta.video_id,
                    frame_index: meta.frame_index,
                });
            }
            if meta.frame_index > expected {
                return Err(CatalogError::FrameIndexGap {
                    video_id: meta.video_id,
                    frame_index: meta.frame_index,
                    expected,
                });
            }
            if expected > 0 && meta.timestamp_ms < last_ts {
                return Err(CatalogError::DecreasingTimestamp {
                    video_id: meta.video_id,
                    frame_index: meta.frame_index,
                    timestamp_ms: meta.timestamp_ms,
                    previous_ms: last_ts,
                });
            }
            last_ts = meta.timestamp_ms;
            entry.1 += 1;
            records.push(FrameRecord {
                frame_id: assigned,
                video_id: meta.video_id,
                frame_index: meta.frame_index,
                timestamp_ms: meta.timestamp_ms,
                image_path: meta.image_path,
            });
        }

        let order: Vec<(String, Option<String>)> = match self.videos {
            None => seen.iter().map(|(id, _, _)| (id.clone(), None)).collect(),
            Some(specs) => {
                let mut listed = HashMap::new();
                for (i, spec) in specs.iter().enumerate() {
                    if listed.insert(spec.video_id().to_owned(), i).is_some() {
                        return Err(CatalogError::DuplicateVideo(spec.video_id().to_owned()));
                    }
                }
                let mut last_pos = None;
                for (id, _, _) in &seen {
                    let pos = *listed.get(id).ok_or_else(|| CatalogError::UnlistedVideo(id.clone()))?;
                    if last_pos.is_some_and(|p| pos < p) {
                        return Err(CatalogError::VideoOrder(id.clone()));
                    }
                    last_pos = Some(pos);
                }
                specs
                    .into_iter()
                    .map(|s| (s.video_id().to_owned(), s.video_path().map(str::to_owned)))
                    .collect()
            }
        };

        let mut videos = Vec::with_capacity(order.len());
        let mut clips = Vec::new();
        let mut next_frame = 0u32;
        for (video_id, video_path) in order {
            let frame_count = seen_lookup.get(&video_id).map_or(0, |&i| seen[i].1);
            let first_clip_id = clips.len() as u32;
            for start in (0..frame_count as usize).step_by(CLIP_LEN) {
                let end = (start + CLIP_LEN).min(frame_count as usize) - 1;
                clips.push(ClipRecord {
                    clip_id: clips.len() as u32,
                    video_id: video_id.clone(),
                    start_frame_index: start as u32,
                    end_frame_index: end as u32,
                });
            }
            videos.push(VideoEntry {
                video_id,
                frame_count,
                first_frame_id: next_frame,
                first_clip_id,
                video_path,
            });
            next_frame += frame_count;
        }

        Catalog::try_from(CatalogParts {
            videos,
            frames: records,
            clips,
            spaces: self.spaces,
            dedup_removed: BTreeSet::new(),
        })
    }
}

/// Builds a catalog with no declared spaces, taking video order from the
/// frame stream.
pub fn build_catalog<I>(frames: I) -> Result<Catalog, CatalogError>
where
    I: IntoIterator<Item = FrameMeta>,
{
    CatalogBuilder::new().build(frames)
}

impl Catalog {
    fn validate(&self) -> Result<(), CatalogError> {
        let bad = |msg: String| Err(CatalogError::Inconsistent(msg));
        if self.video_lookup.len() != self.videos.len() {
            return bad("duplicate video ids".into());
        }
        if self.space_lookup.len() != self.spaces.len() {
            let mut ids = BTreeSet::new();
            for s in &self.spaces {
                if !ids.insert(&s.space_id) {
                    return Err(CatalogError::DuplicateSpace(s.space_id.clone()));
                }
            }
        }
        for s in &self.spaces {
            if s.dim == 0 {
                return Err(CatalogError::InvalidSpace {
                    space_id: s.space_id.clone(),
                    reason: "dim must be at least 1".into(),
                });
            }
            if !is_valid_token(&s.space_id) {
                return Err(CatalogError::InvalidSpace {
                    space_id: s.space_id.clone(),
                    reason: "space ids may only contain ASCII letters, digits, '_', '-' and '.'".into(),
                });
            }
        }
        let mut next_frame = 0u32;
        let mut next_clip = 0u32;
        for v in &self.videos {
            if v.first_frame_id != next_frame || v.first_clip_id != next_clip {
                return bad(format!("video {} does not follow its predecessor", v.video_id));
            }
            for (pos, fid) in v.frame_ids().enumerate() {
                let Some(f) = self.frames.get(fid as usize) else {
                    return bad(format!("video {} references missing frame {fid}", v.video_id));
                };
                if f.frame_id != fid || f.video_id != v.video_id || f.frame_index as usize != pos {
                    return bad(format!("frame {fid} does not match video {}", v.video_id));
                }
                if pos > 0 && f.timestamp_ms < self.frames[fid as usize - 1].timestamp_ms {
                    return bad(format!("frame {fid} has a decreasing timestamp"));
                }
            }
            for (k, cid) in v.clip_ids().enumerate() {
                let Some(c) = self.clips.get(cid as usize) else {
                    return bad(format!("video {} references missing clip {cid}", v.video_id));
                };
                let start = (k * CLIP_LEN) as u32;
                let end = (start as usize + CLIP_LEN).min(v.frame_count as usize) as u32 - 1;
                if c.clip_id != cid
                    || c.video_id != v.video_id
                    || c.start_frame_index != start
                    || c.end_frame_index != end
                {
                    return bad(format!("clip {cid} does not tile video {}", v.video_id));
                }
            }
            next_frame += v.frame_count;
            next_clip += v.clip_count();
        }
        if next_frame as usize != self.frames.len() || next_clip as usize != self.clips.len() {
            return bad("frames or clips not covered by any video".into());
        }
        if let Some(&max) = self.dedup_removed.iter().next_back() {
            if max >= next_frame {
                return bad(format!("dedup_removed references unknown frame {max}"));
            }
        }
        Ok(())
    }

    pub fn videos(&self) -> &[VideoEntry] {
        &self.videos
    }

    pub fn frames(&self) -> &[FrameRecord] {
        &self.frames
    }

    pub fn clips(&self) -> &[ClipRecord] {
        &self.clips
    }

    pub fn spaces(&self) -> &[ModelSpace] {
        &self.spaces
    }

    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn num_clips(&self) -> usize {
        self.clips.len()
    }

    pub fn frame(&self, frame_id: u32) -> Result<&FrameRecord, CatalogError> {
        self.frames
            .get(frame_id as usize)
            .ok_or(CatalogError::UnknownFrame(frame_id))
    }

    pub fn clip(&self, clip_id: u32) -> Result<&ClipRecord, CatalogError> {
        self.clips
            .get(clip_id as usize)
            .ok_or(CatalogError::UnknownClip(clip_id))
    }

    pub fn video(&self, video_id: &str) -> Result<&VideoEntry, CatalogError> {
        self.video_lookup
            .get(video_id)
            .map(|&i| &self.videos[i])
            .ok_or_else(|| CatalogError::UnknownVideo(video_id.to_owned()))
    }

    pub fn video_of_frame(&self, frame_id: u32) -> Result<&VideoEntry, CatalogError> {
        let frame = self.frame(frame_id)?;
        self.video(&frame.video_id)
    }

    pub fn space(&self, space_id: &str) -> Result<&ModelSpace, CatalogError> {
        self.space_lookup
            .get(space_id)
            .map(|&i| &self.spaces[i])
            .ok_or_else(|| CatalogError::UnknownSpace(space_id.to_owned()))
    }

    /// Expected row count of an embedding matrix for `granularity`.
    pub fn rows_for(&self, granularity: Granularity) -> usize {
        match granularity {
            Granularity::Frame => self.frames.len(),
            Granularity::Clip8 => self.clips.len(),
        }
    }

    /// Frame ids covered by a clip.
    pub fn clip_frame_ids(&self, clip_id: u32) -> Result<Range<u32>, CatalogError> {
        let clip = self.clip(clip_id)?;
        let video = self.video(&clip.video_id)?;
        let start = video.first_frame_id + clip.start_frame_index;
        Ok(start..video.first_frame_id + clip.end_frame_index + 1)
    }

    pub fn clip_of_frame(&self, frame_id: u32) -> Result<u32, CatalogError> {
        let video = self.video_of_frame(frame_id)?;
        let pos = (frame_id - video.first_frame_id) as usize;
        Ok(video.first_clip_id + (pos / CLIP_LEN) as u32)
    }

    /// Up to `radius` frames on each side of `frame_id` within the same
    /// video, temporally ordered, anchor included.
    pub fn neighbors(&self, frame_id: u32, radius: usize) -> Result<Vec<Neighbor>, CatalogError> {
        let video = self.video_of_frame(frame_id)?;
        let range = video.frame_ids();
        let lo = frame_id
            .saturating_sub(radius.min(u32::MAX as usize) as u32)
            .max(range.start);
        let hi = (u64::from(frame_id) + radius as u64 + 1).min(u64::from(range.end)) as u32;
        Ok((lo..hi)
            .map(|id| Neighbor {
                frame_id: id,
                is_anchor: id == frame_id,
            })
            .collect())
    }

    pub fn dedup_removed(&self) -> &BTreeSet<u32> {
        &self.dedup_removed
    }

    pub fn is_removed(&self, frame_id: u32) -> bool {
        self.dedup_removed.contains(&frame_id)
    }

    /// Replaces the dedup result. Ids must refer to existing frames.
    pub fn with_dedup_removed(mut self, removed: BTreeSet<u32>) -> Result<Self, CatalogError> {
        if let Some(&max) = removed.iter().next_back() {
            if max as usize >= self.frames.len() {
                return Err(CatalogError::UnknownFrame(max));
            }
        }
        self.dedup_removed = removed;
        Ok(self)
    }
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    fn catalog_strategy() -> impl Strategy<Value = Catalog> {
        prop::collection::vec(0u32..40, 0..8).prop_map(|lens| {
            let specs: Vec<(String, u32)> = lens.iter().enumerate().map(|(i, &n)| (format!("v{i}"), n)).collect();
            let frames: Vec<FrameMeta> = specs
                .iter()
                .flat_map(|(v, n)| {
                    (0..*n).map(move |i| FrameMeta {
                        frame_id: None,
                        video_id: v.clone(),
                        frame_index: i,
                        timestamp_ms: u64::from(i) * 40,
                        image_path: format!("{v}/{i}.jpg"),
                    })
                })
                .collect();
            CatalogBuilder::new()
                .videos(specs.into_iter().map(|(v, _)| VideoSpec::Id(v)).collect())
                .build(frames)
                .unwrap()
        })
    }

    proptest! {
        #[test]
        fn serde_round_trip(c in catalog_strategy()) {
            let json = serde_json::to_vec(&c).unwrap();
            let back: Catalog = serde_json::from_slice(&json).unwrap();
            prop_assert_eq!(back, c);
        }

        #[test]
        fn clip_lengths_sum_to_frames(c in catalog_strategy()) {
            for v in c.videos() {
                let total: usize = v.clip_ids().map(|id| c.clip(id).unwrap().len()).sum();
                prop_assert_eq!(total, v.frame_count as usize);
                prop_assert_eq!(v.clip_count() as usize, (v.frame_count as usize).div_ceil(8));
            }
        }

        #[test]
        fn neighbors_stay_in_video(c in catalog_strategy(), pick in any::<prop::sample::Index>(), radius in 0usize..12) {
            prop_assume!(c.num_frames() > 0);
            let fid = pick.index(c.num_frames()) as u32;
            let video = &c.frame(fid).unwrap().video_id;
            let n = c.neighbors(fid, radius).unwrap();
            prop_assert!(n.len() <= 2 * radius + 1);
            prop_assert!(n.windows(2).all(|w| w[0].frame_id + 1 == w[1].frame_id));
            for x in &n {
                prop_assert_eq!(&c.frame(x.frame_id).unwrap().video_id, video);
                prop_assert!(x.frame_id.abs_diff(fid) as usize <= radius);
            }
        }
    }
}
