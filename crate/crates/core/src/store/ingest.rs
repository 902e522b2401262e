//! Manifest-driven ingest into a catalog directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::catalog::{CatalogBuilder, Granularity, ModelSpace, VideoSpec};
use crate::filter::{ClassVocabulary, DEFAULT_NUM_CLASSES};
use crate::matrix::normalize_rows;

use super::jsonl::{parse_object_vectors, read_jsonl, write_object_vectors};
use super::{
    read_emb, read_frame_meta, read_transcripts, write_atomic, write_emb, write_frame_records, write_jsonl, CatalogDir,
    StoreError,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpaceSpec {
    pub space_id: String,
    pub dim: usize,
    pub granularity: Granularity,
    /// Relative to the manifest's directory.
    pub emb_path: PathBuf,
}

/// Ingest manifest. Relative paths resolve against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    /// Declared video order. When empty, the order of the frames file is used.
    #[serde(default)]
    pub videos: Vec<VideoSpec>,
    pub spaces: Vec<SpaceSpec>,
    pub frames_path: PathBuf,
    #[serde(default)]
    pub objects_path: Option<PathBuf>,
    #[serde(default)]
    pub transcripts_path: Option<PathBuf>,
    /// One class name per line; defines the class count for object vectors.
    #[serde(default)]
    pub vocabulary_path: Option<PathBuf>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self, StoreError> {
        let bytes = std::fs::read(path).map_err(|e| StoreError::io(path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| StoreError::invalid(path, e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SpaceIngest {
    pub space_id: String,
    pub rows: usize,
    /// Rows that were all zero and stay zero after normalization.
    pub zero_rows: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub videos: usize,
    pub frames: usize,
    pub clips: usize,
    pub spaces: Vec<SpaceIngest>,
    pub frames_with_objects: usize,
    pub num_classes: usize,
    pub transcript_segments: usize,
}

/// Validates every input named by the manifest and writes a fresh catalog
/// directory. Existing indexes and dedup results in `out` are discarded;
/// the submission log is left alone.
pub fn ingest(manifest_path: &Path, out: &CatalogDir) -> Result<IngestReport, StoreError> {
    let manifest = Manifest::load(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let resolve = |p: &Path| base.join(p);

    let frames = read_frame_meta(&resolve(&manifest.frames_path))?;
    let mut builder = CatalogBuilder::new().spaces(
        manifest
            .spaces
            .iter()
            .map(|s| ModelSpace::new(s.space_id.clone(), s.dim, s.granularity)),
    );
    if !manifest.videos.is_empty() {
        builder = builder.videos(manifest.videos.clone());
    }
    let catalog = builder.build(frames)?;

    let mut matrices = Vec::with_capacity(manifest.spaces.len());
    for spec in &manifest.spaces {
        let path = resolve(&spec.emb_path);
        let matrix = read_emb(&path)?;
        if matrix.dim() != spec.dim {
            return Err(StoreError::invalid(
                &path,
                format!("dim {} but space {} declares {}", matrix.dim(), spec.space_id, spec.dim),
            ));
        }
        let expected = catalog.rows_for(spec.granularity);
        if matrix.len() != expected {
            return Err(StoreError::invalid(
                &path,
                format!(
                    "{} rows but {:?} space {} needs {expected}",
                    matrix.len(),
                    spec.granularity,
                    spec.space_id
                ),
            ));
        }
        matrices.push((spec.space_id.clone(), normalize_rows(matrix)));
    }

    let vocabulary = match &manifest.vocabulary_path {
        Some(p) => {
            let path = resolve(p);
            let text = std::fs::read_to_string(&path).map_err(|e| StoreError::io(&path, e))?;
            Some((text.clone(), ClassVocabulary::from_lines(&text)?))
        }
        None => None,
    };
    let num_classes = vocabulary.as_ref().map_or(DEFAULT_NUM_CLASSES, |(_, v)| v.len());

    let objects = match &manifest.objects_path {
        Some(p) => {
            let path = resolve(p);
            parse_object_vectors(&path, read_jsonl(&path)?, catalog.num_frames(), num_classes)?
        }
        None => crate::filter::ObjectVectors::empty(catalog.num_frames(), num_classes),
    };

    let transcripts = match &manifest.transcripts_path {
        Some(p) => {
            let path = resolve(p);
            let lines = read_transcripts(&path)?;
            if let Some(t) = lines.iter().find(|t| catalog.video(&t.video_id).is_err()) {
                return Err(StoreError::invalid(&path, format!("unknown video_id {}", t.video_id)));
            }
            lines
        }
        None => Vec::new(),
    };

    // Everything validated; now write.
    std::fs::create_dir_all(out.root()).map_err(|e| StoreError::io(out.root(), e))?;
    for stale in [out.root().join("indexes"), out.root().join("spaces")] {
        if stale.is_dir() {
            std::fs::remove_dir_all(&stale).map_err(|e| StoreError::io(&stale, e))?;
        }
    }
    let report_path = out.dedup_report_path();
    if report_path.is_file() {
        std::fs::remove_file(&report_path).map_err(|e| StoreError::io(&report_path, e))?;
    }

    let mut space_reports = Vec::new();
    for (space_id, normalized) in &matrices {
        write_emb(&out.space_path(space_id), &normalized.matrix)?;
        space_reports.push(SpaceIngest {
            space_id: space_id.clone(),
            rows: normalized.matrix.len(),
            zero_rows: normalized.zero_rows.clone(),
        });
    }
    match &vocabulary {
        Some((text, _)) => write_atomic(&out.vocabulary_path(), text.as_bytes())?,
        None => {
            let p = out.vocabulary_path();
            if p.is_file() {
                std::fs::remove_file(&p).map_err(|e| StoreError::io(&p, e))?;
            }
        }
    }
    write_object_vectors(&out.objects_path(), &objects)?;
    write_jsonl(&out.transcripts_path(), &transcripts)?;
    write_frame_records(&out.frames_path(), catalog.frames())?;
    out.save_catalog(&catalog)?;

    Ok(IngestReport {
        videos: catalog.videos().len(),
        frames: catalog.num_frames(),
        clips: catalog.num_clips(),
        spaces: space_reports,
        frames_with_objects: (0..catalog.num_frames() as u32)
            .filter(|&f| objects.get(f).is_some_and(|s| !s.is_clear()))
            .count(),
        num_classes,
        transcript_segments: transcripts.len(),
    })
}
