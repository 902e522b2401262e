//! Seeded synthetic corpora in the ingest layout, for demos and tests.
//!
//! Each video is a run of scenes. Frames in a scene are noisy copies of a
//! scene vector (per space), share the scene's object classes, and the
//! scene gets one transcript segment.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde_json::json;

use crate::catalog::{Granularity, CLIP_LEN};
use crate::matrix::EmbeddingMatrix;
use crate::store::{write_emb, write_jsonl, StoreError};

const NAMES: &[&str] = &[
    "person",
    "car",
    "dog",
    "cat",
    "bicycle",
    "traffic light",
    "boat",
    "bird",
    "horse",
    "bus",
    "truck",
    "chair",
    "table",
    "laptop",
    "phone",
    "book",
    "clock",
    "umbrella",
    "bottle",
    "cup",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpace {
    pub space_id: String,
    pub dim: usize,
    pub granularity: Granularity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub seed: u64,
    /// Frame count per video.
    pub videos: Vec<u32>,
    pub spaces: Vec<SynthSpace>,
    pub scene_len: u32,
    /// Per-dimension noise around the scene vector, relative to unit-variance scene vectors.
    pub noise: f32,
    /// Vocabulary size; 0 writes no vocabulary and no object file.
    pub num_classes: usize,
    pub frame_interval_ms: u64,
}

impl SynthSpec {
    pub fn small(seed: u64) -> Self {
        Self {
            seed,
            videos: vec![20, 13, 32],
            spaces: vec![
                SynthSpace {
                    space_id: "clip".into(),
                    dim: 16,
                    granularity: Granularity::Frame,
                },
                SynthSpace {
                    space_id: "blip".into(),
                    dim: 8,
                    granularity: Granularity::Frame,
                },
                SynthSpace {
                    space_id: "video".into(),
                    dim: 8,
                    granularity: Granularity::Clip8,
                },
            ],
            scene_len: 5,
            noise: 0.05,
            num_classes: 12,
            frame_interval_ms: 500,
        }
    }
}

pub fn class_name(class: usize) -> String {
    NAMES
        .get(class)
        .map_or_else(|| format!("class {class}"), |s| (*s).to_string())
}

pub fn video_id(v: usize) -> String {
    format!("v{v:03}")
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f32> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

/// Writes the corpus under `dir` and returns the manifest path.
pub fn write_corpus(spec: &SynthSpec, dir: &Path) -> Result<PathBuf, StoreError> {
    std::fs::create_dir_all(dir).map_err(|e| StoreError::io(dir, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let scene_len = spec.scene_len.max(1);

    let mut frame_lines = Vec::new();
    let mut object_lines = Vec::new();
    let mut objects = Vec::new();
    let mut transcripts = Vec::new();
    // Scene index of every frame, and each scene's vectors per space.
    let mut frame_scene = Vec::new();
    let mut scene_vectors: Vec<Vec<Vec<f32>>> = Vec::new();
    let mut frame_id = 0u32;
    for (v, &n) in spec.videos.iter().enumerate() {
        let vid = video_id(v);
        for i in 0..n {
            if i % scene_len == 0 {
                scene_vectors.push(spec.spaces.iter().map(|s| gaussian(&mut rng, s.dim)).collect());
                let start = u64::from(i) * spec.frame_interval_ms;
                let end = u64::from((i + scene_len).min(n)) * spec.frame_interval_ms;
                let mut classes: Vec<u32> = Vec::new();
                if spec.num_classes > 0 {
                    for _ in 0..rng.random_range(1..=3) {
                        classes.push(rng.random_range(0..spec.num_classes as u32));
                    }
                    classes.sort_unstable();
                    classes.dedup();
                }
                let names: Vec<String> = classes.iter().map(|&c| class_name(c as usize)).collect();
                transcripts.push(json!({
                    "video_id": vid,
                    "start_ms": start,
                    "end_ms": end.max(start + 1),
                    "text": format!("scene {} of {vid}: {}", i / scene_len, names.join(", ")),
                }));
                objects.push(classes);
            }
            let scene = scene_vectors.len() - 1;
            frame_scene.push(scene);
            if spec.num_classes > 0 && !objects[scene].is_empty() {
                object_lines.push(json!({"frame_id": frame_id, "classes": objects[scene]}));
            }
            frame_lines.push(json!({
                "video_id": vid,
                "frame_index": i,
                "timestamp_ms": u64::from(i) * spec.frame_interval_ms,
                "image_path": format!("keyframes/{vid}/{i:05}.jpg"),
            }));
            frame_id += 1;
        }
    }

    let mut manifest_spaces = Vec::new();
    for (s, space) in spec.spaces.iter().enumerate() {
        let mut data = Vec::new();
        match space.granularity {
            Granularity::Frame => {
                for &scene in &frame_scene {
                    push_noisy(&mut data, &scene_vectors[scene][s], spec.noise, &mut rng);
                }
            }
            Granularity::Clip8 => {
                let mut start = 0usize;
                for &n in &spec.videos {
                    for c in (0..n as usize).step_by(CLIP_LEN) {
                        let scene = frame_scene[start + c];
                        push_noisy(&mut data, &scene_vectors[scene][s], spec.noise, &mut rng);
                    }
                    start += n as usize;
                }
            }
        }
        let matrix = EmbeddingMatrix::new(space.dim, data).map_err(|e| StoreError::invalid(dir, e.to_string()))?;
        let file = format!("{}.vemb", space.space_id);
        write_emb(&dir.join(&file), &matrix)?;
        manifest_spaces.push(json!({
            "space_id": space.space_id,
            "dim": space.dim,
            "granularity": space.granularity,
            "emb_path": file,
        }));
    }

    write_jsonl(&dir.join("frames.jsonl"), &frame_lines)?;
    write_jsonl(&dir.join("transcripts.jsonl"), &transcripts)?;
    let mut manifest = json!({
        "videos": (0..spec.videos.len()).map(|v| json!({"video_id": video_id(v), "video_path": format!("videos/{}.mp4", video_id(v))})).collect::<Vec<_>>(),
        "spaces": manifest_spaces,
        "frames_path": "frames.jsonl",
        "transcripts_path": "transcripts.jsonl",
    });
    if spec.num_classes > 0 {
        write_jsonl(&dir.join("objects.jsonl"), &object_lines)?;
        let vocab: String = (0..spec.num_classes).map(|c| class_name(c) + "\n").collect();
        std::fs::write(dir.join("vocabulary.txt"), vocab).map_err(|e| StoreError::io(dir, e))?;
        manifest["objects_path"] = json!("objects.jsonl");
        manifest["vocabulary_path"] = json!("vocabulary.txt");
    }
    let path = dir.join("manifest.json");
    let bytes = serde_json::to_vec_pretty(&manifest).map_err(|e| StoreError::invalid(&path, e.to_string()))?;
    std::fs::write(&path, bytes).map_err(|e| StoreError::io(&path, e))?;
    Ok(path)
}

fn push_noisy(out: &mut Vec<f32>, centre: &[f32], noise: f32, rng: &mut ChaCha8Rng) {
    for &c in centre {
        let e: f32 = rng.sample(StandardNormal);
        out.push(c + noise * e);
    }
}
