//! Append-only submission log (one JSON object per line).

use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::{create_parent, StoreError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmissionRecord {
    pub submission_id: u64,
    pub frame_id: u32,
    pub video_id: String,
    pub timestamp_ms: u64,
    /// Unix time in milliseconds.
    pub created_at: u64,
    pub query_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NewSubmission {
    pub frame_id: u32,
    pub video_id: String,
    pub timestamp_ms: u64,
    pub query_text: String,
}

/// Parses the complete lines of a log. A trailing line without `\n` is a
/// torn write and is ignored, so a reader racing a writer sees a prefix.
fn parse_log(path: &Path, bytes: &[u8]) -> Result<(Vec<SubmissionRecord>, usize), StoreError> {
    let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1);
    let mut records: Vec<SubmissionRecord> = Vec::new();
    for (i, line) in bytes[..complete].split(|&b| b == b'\n').enumerate() {
        if line.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        let record: SubmissionRecord = serde_json::from_slice(line).map_err(|e| StoreError::Line {
            path: path.display().to_string(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        if let Some(last) = records.last() {
            if record.submission_id <= last.submission_id {
                return Err(StoreError::Line {
                    path: path.display().to_string(),
                    line: i + 1,
                    reason: format!(
                        "submission_id {} not greater than {}",
                        record.submission_id, last.submission_id
                    ),
                });
            }
        }
        records.push(record);
    }
    Ok((records, complete))
}

/// Reads every complete record of a log file. A missing file is an empty log.
pub fn read_submission_log(path: &Path) -> Result<Vec<SubmissionRecord>, StoreError> {
    match std::fs::read(path) {
        Ok(bytes) => Ok(parse_log(path, &bytes)?.0),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
        Err(e) => Err(StoreError::io(path, e)),
    }
}

/// Durable, append-only log. Appends are serialized through one writer;
/// readers get a snapshot and never wait on the file.
#[derive(Debug)]
pub struct SubmissionLog {
    path: PathBuf,
    writer: Mutex<File>,
    records: RwLock<Vec<SubmissionRecord>>,
}

impl SubmissionLog {
    /// Opens (or creates) the log, dropping a torn trailing line if present.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let path = path.into();
        create_parent(&path)?;
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&path)
            .map_err(|e| StoreError::io(&path, e))?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes).map_err(|e| StoreError::io(&path, e))?;
        let (records, complete) = parse_log(&path, &bytes)?;
        if complete < bytes.len() {
            file.set_len(complete as u64).map_err(|e| StoreError::io(&path, e))?;
            file.seek(SeekFrom::End(0)).map_err(|e| StoreError::io(&path, e))?;
        }
        Ok(Self {
            path,
            writer: Mutex::new(file),
            records: RwLock::new(records),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, new: NewSubmission) -> Result<SubmissionRecord, StoreError> {
        let mut file = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        let next_id = self
            .records
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .last()
            .map_or(1, |r| r.submission_id + 1);
        let created_at = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_millis() as u64);
        let record = SubmissionRecord {
            submission_id: next_id,
            frame_id: new.frame_id,
            video_id: new.video_id,
            timestamp_ms: new.timestamp_ms,
            created_at,
            query_text: new.query_text,
        };
        let mut line = serde_json::to_vec(&record).expect("record serializes");
        line.push(b'\n');
        file.write_all(&line).map_err(|e| StoreError::io(&self.path, e))?;
        file.sync_data().map_err(|e| StoreError::io(&self.path, e))?;
        self.records
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .push(record.clone());
        Ok(record)
    }

    /// Records in insertion order.
    pub fn list(&self) -> Vec<SubmissionRecord> {
        self.records.read().unwrap_or_else(|e| e.into_inner()).clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sub(frame_id: u32) -> NewSubmission {
        NewSubmission {
            frame_id,
            video_id: "v".into(),
            timestamp_ms: u64::from(frame_id) * 100,
            query_text: "a dog".into(),
        }
    }

    #[test]
    fn ids_increase_and_survive_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.jsonl");
        {
            let log = SubmissionLog::open(&path).unwrap();
            assert_eq!(log.append(sub(3)).unwrap().submission_id, 1);
            assert_eq!(log.append(sub(3)).unwrap().submission_id, 2);
        }
        let log = SubmissionLog::open(&path).unwrap();
        let before = log.list();
        assert_eq!(before.len(), 2);
        assert_eq!(log.append(sub(9)).unwrap().submission_id, 3);
        assert_eq!(read_submission_log(&path).unwrap().len(), 3);
        assert_eq!(read_submission_log(&path).unwrap()[..2], before[..]);
    }

    #[test]
    fn torn_tail_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.jsonl");
        let log = SubmissionLog::open(&path).unwrap();
        log.append(sub(1)).unwrap();
        drop(log);
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"submission_id\": 2, \"fra").unwrap();
        drop(f);
        assert_eq!(read_submission_log(&path).unwrap().len(), 1);
        let log = SubmissionLog::open(&path).unwrap();
        assert_eq!(log.append(sub(2)).unwrap().submission_id, 2);
        assert_eq!(read_submission_log(&path).unwrap().len(), 2);
    }

    #[test]
    fn file_bytes_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.jsonl");
        let log = SubmissionLog::open(&path).unwrap();
        for i in 0..5 {
            log.append(sub(i)).unwrap();
        }
        let bytes = std::fs::read(&path).unwrap();
        let mut rewritten = Vec::new();
        for r in read_submission_log(&path).unwrap() {
            rewritten.extend(serde_json::to_vec(&r).unwrap());
            rewritten.push(b'\n');
        }
        assert_eq!(bytes, rewritten);
    }

    #[test]
    fn concurrent_appends_keep_ids_unique() {
        let dir = tempfile::tempdir().unwrap();
        let log = std::sync::Arc::new(SubmissionLog::open(dir.path().join("s.jsonl")).unwrap());
        let handles: Vec<_> = (0..4)
            .map(|t| {
                let log = log.clone();
                std::thread::spawn(move || {
                    for i in 0..10 {
                        log.append(sub(t * 100 + i)).unwrap();
                    }
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        let ids: Vec<u64> = log.list().iter().map(|r| r.submission_id).collect();
        assert_eq!(ids, (1..=40).collect::<Vec<_>>());
        assert_eq!(read_submission_log(log.path()).unwrap(), log.list());
    }
}
