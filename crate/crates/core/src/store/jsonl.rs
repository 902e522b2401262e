//! JSON-lines formats: frame metadata, object vectors and transcripts.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::catalog::{FrameMeta, FrameRecord};
use crate::filter::ObjectVectors;

use super::{create_parent, StoreError};

/// Reads one JSON value per line. Blank lines are skipped; errors carry the
/// 1-based line number.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>, StoreError> {
    let file = std::fs::File::open(path).map_err(|e| StoreError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| StoreError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| StoreError::Line {
            path: path.display().to_string(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        out.push((i + 1, value));
    }
    Ok(out)
}

pub fn write_jsonl<'a, T, I>(path: &Path, items: I) -> Result<(), StoreError>
where
    T: Serialize + 'a,
    I: IntoIterator<Item = &'a T>,
{
    create_parent(path)?;
    let file = std::fs::File::create(path).map_err(|e| StoreError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| StoreError::invalid(path, e.to_string()))?;
        w.write_all(b"\n").map_err(|e| StoreError::io(path, e))?;
    }
    w.flush().map_err(|e| StoreError::io(path, e))
}

pub fn read_frame_meta(path: &Path) -> Result<Vec<FrameMeta>, StoreError> {
    Ok(read_jsonl(path)?.into_iter().map(|(_, m)| m).collect())
}

pub fn write_frame_records(path: &Path, frames: &[FrameRecord]) -> Result<(), StoreError> {
    write_jsonl(path, frames)
}

/// Detected classes of one frame, as ascending class ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectVectorLine {
    pub frame_id: u32,
    pub classes: Vec<u32>,
}

fn line_err(path: &Path, line: usize, reason: String) -> StoreError {
    StoreError::Line {
        path: path.display().to_string(),
        line,
        reason,
    }
}

/// Validates object lines against the frame count and class count.
pub fn parse_object_vectors(
    path: &Path,
    lines: Vec<(usize, ObjectVectorLine)>,
    num_frames: usize,
    num_classes: usize,
) -> Result<ObjectVectors, StoreError> {
    let mut out = ObjectVectors::empty(num_frames, num_classes);
    let mut seen = vec![false; num_frames];
    for (line, obj) in lines {
        let fid = obj.frame_id as usize;
        if fid >= num_frames {
            return Err(line_err(path, line, format!("unknown frame_id {}", obj.frame_id)));
        }
        if std::mem::replace(&mut seen[fid], true) {
            return Err(line_err(path, line, format!("duplicate frame_id {}", obj.frame_id)));
        }
        if let Some(w) = obj.classes.windows(2).find(|w| w[0] >= w[1]) {
            return Err(line_err(
                path,
                line,
                format!("classes must be strictly ascending ({} then {})", w[0], w[1]),
            ));
        }
        if let Some(&c) = obj.classes.iter().find(|&&c| c as usize >= num_classes) {
            return Err(line_err(
                path,
                line,
                format!("class index {c} out of range for {num_classes} classes"),
            ));
        }
        out.set(obj.frame_id, &obj.classes).expect("validated above");
    }
    Ok(out)
}

pub fn load_object_vectors(path: &Path, num_frames: usize, num_classes: usize) -> Result<ObjectVectors, StoreError> {
    parse_object_vectors(path, read_jsonl(path)?, num_frames, num_classes)
}

/// Writes one line per frame with at least one detection, in frame order.
pub fn write_object_vectors(path: &Path, objects: &ObjectVectors) -> Result<(), StoreError> {
    let lines: Vec<ObjectVectorLine> = (0..objects.num_frames() as u32)
        .map(|frame_id| ObjectVectorLine {
            frame_id,
            classes: objects.classes(frame_id),
        })
        .filter(|l| !l.classes.is_empty())
        .collect();
    write_jsonl(path, &lines)
}

/// One summarized audio segment of a video.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptLine {
    pub video_id: String,
    pub start_ms: u64,
    pub end_ms: u64,
    pub text: String,
}

pub fn read_transcripts(path: &Path) -> Result<Vec<TranscriptLine>, StoreError> {
    let mut out = Vec::new();
    for (line, t) in read_jsonl::<TranscriptLine>(path)? {
        if t.start_ms >= t.end_ms {
            return Err(line_err(
                path,
                line,
                format!("start_ms {} must be before end_ms {}", t.start_ms, t.end_ms),
            ));
        }
        if t.text.trim().is_empty() {
            return Err(line_err(path, line, "empty text".into()));
        }
        out.push(t);
    }
    Ok(out)
}
