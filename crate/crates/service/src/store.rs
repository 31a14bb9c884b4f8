//! Embedded file store.
//!
//! Layout under the store root:
//!
//! ```text
//! session_event/<curation id>.jsonl   append-only curation event logs
//! guided_session/<session id>.json    versioned snapshot documents
//! catalog/<key>.json                  ingest manifests
//! space_header/<space id>.json
//! theme_code.jsonl                    append-only theme codes
//! ```
//!
//! Snapshot documents are [`StoreRecord`]s written through a temporary file
//! and a rename, so a reader never sees a half-written document. Each event
//! log line is a curation event whose `seq` is its version.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use easel_core::catalog::is_valid_id;
use easel_core::curation::{read_event_log, CurationError, LoggedEvent};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Catalog,
    SpaceHeader,
    SessionEvent,
    GuidedSession,
    ThemeCode,
}

impl RecordKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RecordKind::Catalog => "catalog",
            RecordKind::SpaceHeader => "space_header",
            RecordKind::SessionEvent => "session_event",
            RecordKind::GuidedSession => "guided_session",
            RecordKind::ThemeCode => "theme_code",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreRecord {
    pub kind: RecordKind,
    pub key: String,
    pub version: u64,
    pub body: serde_json::Value,
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{kind} {key:?}: expected version {expected}, found {actual}")]
    VersionConflict {
        kind: &'static str,
        key: String,
        expected: u64,
        actual: u64,
    },
    #[error("invalid store key {0:?}")]
    InvalidKey(String),
    #[error("corrupt store file {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error("store i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone)]
pub struct FileStore {
    root: PathBuf,
}

impl FileStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        for kind in [
            RecordKind::Catalog,
            RecordKind::SpaceHeader,
            RecordKind::SessionEvent,
            RecordKind::GuidedSession,
        ] {
            let dir = root.join(kind.as_str());
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        }
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn checked_path(&self, kind: RecordKind, key: &str, ext: &str) -> Result<PathBuf, StoreError> {
        if !is_valid_id(key) {
            return Err(StoreError::InvalidKey(key.to_string()));
        }
        Ok(self.root.join(kind.as_str()).join(format!("{key}.{ext}")))
    }

    pub fn log_path(&self, curation_id: &str) -> Result<PathBuf, StoreError> {
        self.checked_path(RecordKind::SessionEvent, curation_id, "jsonl")
    }

    /// Appends `events` to the curation's log and syncs it to disk.
    pub fn append_events(
        &self,
        curation_id: &str,
        events: &[LoggedEvent],
    ) -> Result<(), StoreError> {
        let path = self.log_path(curation_id)?;
        let mut buf = String::new();
        for e in events {
            buf.push_str(&e.to_json_line());
            buf.push('\n');
        }
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io_err(&path))?;
        f.write_all(buf.as_bytes()).map_err(io_err(&path))?;
        f.sync_data().map_err(io_err(&path))
    }

    pub fn read_log(&self, curation_id: &str) -> Result<Vec<LoggedEvent>, StoreError> {
        let path = self.log_path(curation_id)?;
        read_log_file(&path)
    }

    /// Every curation log, sorted by id. A trailing line without a newline
    /// is a write that never completed; it is cut off before parsing.
    pub fn load_logs(&self) -> Result<Vec<(String, Vec<LoggedEvent>)>, StoreError> {
        let dir = self.root.join(RecordKind::SessionEvent.as_str());
        let mut out = Vec::new();
        for (key, path) in list_keys(&dir, "jsonl")? {
            repair_torn_tail(&path)?;
            out.push((key, read_log_file(&path)?));
        }
        Ok(out)
    }

    fn record_path(&self, kind: RecordKind, key: &str) -> Result<PathBuf, StoreError> {
        self.checked_path(kind, key, "json")
    }

    pub fn get(&self, kind: RecordKind, key: &str) -> Result<Option<StoreRecord>, StoreError> {
        let path = self.record_path(kind, key)?;
        match fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text)
                .map(Some)
                .map_err(|e| StoreError::Corrupt {
                    path,
                    reason: e.to_string(),
                }),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(io_err(&path)(e)),
        }
    }

    /// Writes version `expected + 1`. `expected` is 0 for a record that must
    /// not exist yet.
    pub fn put(
        &self,
        kind: RecordKind,
        key: &str,
        expected: u64,
        body: serde_json::Value,
    ) -> Result<StoreRecord, StoreError> {
        let actual = self.get(kind, key)?.map_or(0, |r| r.version);
        if actual != expected {
            return Err(StoreError::VersionConflict {
                kind: kind.as_str(),
                key: key.to_string(),
                expected,
                actual,
            });
        }
        let record = StoreRecord {
            kind,
            key: key.to_string(),
            version: expected + 1,
            body,
        };
        let path = self.record_path(kind, key)?;
        let tmp = path.with_extension("json.tmp");
        {
            let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
            let text = serde_json::to_string_pretty(&record).expect("record serializes");
            f.write_all(text.as_bytes()).map_err(io_err(&tmp))?;
            f.sync_data().map_err(io_err(&tmp))?;
        }
        fs::rename(&tmp, &path).map_err(io_err(&path))?;
        Ok(record)
    }

    pub fn remove(&self, kind: RecordKind, key: &str) -> Result<(), StoreError> {
        let path = self.record_path(kind, key)?;
        match fs::remove_file(&path) {
            Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(io_err(&path)(e)),
            _ => Ok(()),
        }
    }

    pub fn list(&self, kind: RecordKind) -> Result<Vec<StoreRecord>, StoreError> {
        let dir = self.root.join(kind.as_str());
        let mut out = Vec::new();
        for (key, _) in list_keys(&dir, "json")? {
            if let Some(r) = self.get(kind, &key)? {
                out.push(r);
            }
        }
        Ok(out)
    }

    fn themes_path(&self) -> PathBuf {
        self.root.join("theme_code.jsonl")
    }

    pub fn append_theme(&self, body: serde_json::Value) -> Result<StoreRecord, StoreError> {
        let version = self.load_themes()?.len() as u64 + 1;
        let record = StoreRecord {
            kind: RecordKind::ThemeCode,
            key: format!("t{version}"),
            version,
            body,
        };
        let path = self.themes_path();
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io_err(&path))?;
        let mut line = serde_json::to_string(&record).expect("record serializes");
        line.push('\n');
        f.write_all(line.as_bytes()).map_err(io_err(&path))?;
        f.sync_data().map_err(io_err(&path))?;
        Ok(record)
    }

    pub fn load_themes(&self) -> Result<Vec<StoreRecord>, StoreError> {
        let path = self.themes_path();
        if !path.exists() {
            return Ok(Vec::new());
        }
        repair_torn_tail(&path)?;
        let f = File::open(&path).map_err(io_err(&path))?;
        let mut out = Vec::new();
        for line in BufReader::new(f).lines() {
            let line = line.map_err(io_err(&path))?;
            if line.trim().is_empty() {
                continue;
            }
            out.push(
                serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
                    path: path.clone(),
                    reason: e.to_string(),
                })?,
            );
        }
        Ok(out)
    }
}

fn read_log_file(path: &Path) -> Result<Vec<LoggedEvent>, StoreError> {
    let f = File::open(path).map_err(io_err(path))?;
    read_event_log(BufReader::new(f)).map_err(|e: CurationError| StoreError::Corrupt {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

fn list_keys(dir: &Path, ext: &str) -> Result<Vec<(String, PathBuf)>, StoreError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some(ext) {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            out.push((stem.to_string(), path.clone()));
        }
    }
    out.sort();
    Ok(out)
}

fn repair_torn_tail(path: &Path) -> Result<(), StoreError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    if bytes.is_empty() || bytes.ends_with(b"\n") {
        return Ok(());
    }
    let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    tracing::warn!(path = %path.display(), dropped = bytes.len() - keep, "dropping incomplete trailing line");
    let f = OpenOptions::new()
        .write(true)
        .open(path)
        .map_err(io_err(path))?;
    f.set_len(keep as u64).map_err(io_err(path))?;
    f.sync_data().map_err(io_err(path))
}
