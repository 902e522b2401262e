//! On-disk formats and the ingest step.
//!
//! A catalog directory produced by [`ingest`] looks like:
//!
//! ```text
//! catalog.json          Catalog (videos, frames, clips, spaces, dedup result)
//! frames.jsonl          one FrameRecord per line, frame_id always present
//! objects.jsonl         one ObjectVectorLine per frame with detections
//! transcripts.jsonl     one TranscriptLine per audio segment
//! vocabulary.txt        object class names, line number = class id
//! spaces/<id>.vemb      unit-normalized embeddings for each space
//! indexes/<id>.vidx     optional IVF / IVF-PQ index for a space
//! dedup_report.json     last dedup report
//! submissions.jsonl     append-only submission log
//! ```

mod emb;
mod ingest;
mod jsonl;
mod submissions;

use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::catalog::{Catalog, CatalogError};
use crate::filter::{ClassVocabulary, ObjectVectors, VocabularyError, DEFAULT_NUM_CLASSES};
use crate::matrix::{EmbeddingMatrix, MatrixError};

pub use emb::{decode_emb, encode_emb, read_emb, write_emb, EMB_HEADER_LEN, EMB_MAGIC, EMB_VERSION};
pub use ingest::{ingest, IngestReport, Manifest, SpaceSpec};
pub use jsonl::{
    load_object_vectors, parse_object_vectors, read_frame_meta, read_jsonl, read_transcripts, write_frame_records,
    write_jsonl, write_object_vectors, ObjectVectorLine, TranscriptLine,
};
pub use submissions::{read_submission_log, NewSubmission, SubmissionLog, SubmissionRecord};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("format error at byte offset {offset}: {reason}")]
    Format { offset: u64, reason: String },
    #[error("{path}:{line}: {reason}")]
    Line { path: String, line: usize, reason: String },
    #[error("{path}: {reason}")]
    Invalid { path: String, reason: String },
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Vocabulary(#[from] VocabularyError),
}

impl StoreError {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        StoreError::Io {
            path: path.to_owned(),
            source,
        }
    }

    pub(crate) fn invalid(path: &Path, reason: impl Into<String>) -> Self {
        StoreError::Invalid {
            path: path.display().to_string(),
            reason: reason.into(),
        }
    }
}

/// Paths inside a catalog directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CatalogDir {
    root: PathBuf,
}

impl CatalogDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn catalog_path(&self) -> PathBuf {
        self.root.join("catalog.json")
    }

    pub fn frames_path(&self) -> PathBuf {
        self.root.join("frames.jsonl")
    }

    pub fn objects_path(&self) -> PathBuf {
        self.root.join("objects.jsonl")
    }

    pub fn transcripts_path(&self) -> PathBuf {
        self.root.join("transcripts.jsonl")
    }

    pub fn vocabulary_path(&self) -> PathBuf {
        self.root.join("vocabulary.txt")
    }

    pub fn space_path(&self, space_id: &str) -> PathBuf {
        self.root.join("spaces").join(format!("{space_id}.vemb"))
    }

    pub fn index_path(&self, space_id: &str) -> PathBuf {
        self.root.join("indexes").join(format!("{space_id}.vidx"))
    }

    pub fn dedup_report_path(&self) -> PathBuf {
        self.root.join("dedup_report.json")
    }

    pub fn submissions_path(&self) -> PathBuf {
        self.root.join("submissions.jsonl")
    }

    pub fn is_ingested(&self) -> bool {
        self.catalog_path().is_file()
    }

    pub fn load_catalog(&self) -> Result<Catalog, StoreError> {
        let path = self.catalog_path();
        let bytes = std::fs::read(&path).map_err(|e| StoreError::io(&path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| StoreError::invalid(&path, e.to_string()))
    }

    /// Writes the catalog atomically (temp file + rename).
    pub fn save_catalog(&self, catalog: &Catalog) -> Result<(), StoreError> {
        let json =
            serde_json::to_vec_pretty(catalog).map_err(|e| StoreError::invalid(&self.catalog_path(), e.to_string()))?;
        write_atomic(&self.catalog_path(), &json)
    }

    /// Loads a space's matrix and checks it against the catalog.
    pub fn load_space(&self, catalog: &Catalog, space_id: &str) -> Result<EmbeddingMatrix, StoreError> {
        let space = catalog.space(space_id)?;
        let path = self.space_path(space_id);
        let matrix = read_emb(&path)?;
        if matrix.dim() != space.dim {
            return Err(StoreError::invalid(
                &path,
                format!("dim {} does not match space dim {}", matrix.dim(), space.dim),
            ));
        }
        let expected = catalog.rows_for(space.granularity);
        if matrix.len() != expected {
            return Err(StoreError::invalid(
                &path,
                format!("{} rows, catalog expects {expected}", matrix.len()),
            ));
        }
        Ok(matrix)
    }

    pub fn load_vocabulary(&self) -> Result<Option<ClassVocabulary>, StoreError> {
        let path = self.vocabulary_path();
        if !path.is_file() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path).map_err(|e| StoreError::io(&path, e))?;
        Ok(Some(ClassVocabulary::from_lines(&text)?))
    }

    /// Object vectors for every frame; frames absent from the file get the
    /// empty set. The class count comes from the vocabulary when present.
    pub fn load_objects(&self, catalog: &Catalog) -> Result<ObjectVectors, StoreError> {
        let num_classes = self.load_vocabulary()?.map_or(DEFAULT_NUM_CLASSES, |v| v.len());
        let path = self.objects_path();
        if !path.is_file() {
            return Ok(ObjectVectors::empty(catalog.num_frames(), num_classes));
        }
        load_object_vectors(&path, catalog.num_frames(), num_classes)
    }

    pub fn load_transcripts(&self) -> Result<Vec<TranscriptLine>, StoreError> {
        let path = self.transcripts_path();
        if !path.is_file() {
            return Ok(Vec::new());
        }
        read_transcripts(&path)
    }
}

pub(crate) fn create_parent(path: &Path) -> Result<(), StoreError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| StoreError::io(parent, e))?;
        }
    }
    Ok(())
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    create_parent(path)?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| StoreError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| StoreError::io(path, e))
}
