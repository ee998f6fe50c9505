//! On-disk layout of a shared project:
//!
//! ```text
//! <data>/<pid>/base.json      creation document, never rewritten
//! <data>/<pid>/log.jsonl      append-only revision log
//! <data>/<pid>/snapshot.json  latest snapshot (canonical document)
//! ```
//!
//! Each log line is `<crc32 as 8 hex digits> <json array of LogEntry>\n` and
//! holds every accepted op of one change-set, so a change-set is durable
//! all-or-nothing. Recovery keeps the longest prefix of intact lines and
//! truncates the rest.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::{apply_logged, LogEntry, ReplayError};
use crate::model::Project;
use crate::serialization::{load_project, LoadError};

const BASE: &str = "base.json";
const LOG: &str = "log.jsonl";
const SNAPSHOT: &str = "snapshot.json";
const TMP_PREFIX: &str = ".tmp-";

#[derive(Debug, Error)]
pub enum StorageError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Document { path: PathBuf, source: LoadError },
    #[error("{path}: log does not replay: {source}")]
    Replay { path: PathBuf, source: ReplayError },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StorageError + '_ {
    move |source| StorageError::Io {
        path: path.to_owned(),
        source,
    }
}

fn sync_dir(dir: &Path) -> io::Result<()> {
    File::open(dir)?.sync_all()
}

pub(crate) struct ProjectDir {
    dir: PathBuf,
    log: File,
    log_len: u64,
}

impl ProjectDir {
    /// Creates `<root>/<pid>` atomically: it is staged under a temporary
    /// name and renamed into place once complete.
    pub(crate) fn create(root: &Path, pid: &str, base_doc: &[u8]) -> Result<ProjectDir, StorageError> {
        fs::create_dir_all(root).map_err(io_err(root))?;
        let dir = root.join(pid);
        let staging = root.join(format!("{TMP_PREFIX}{pid}-{}", uuid::Uuid::new_v4().simple()));
        fs::create_dir(&staging).map_err(io_err(&staging))?;
        write_synced(&staging.join(BASE), base_doc).map_err(io_err(&staging))?;
        File::create(staging.join(LOG))
            .and_then(|f| f.sync_all())
            .map_err(io_err(&staging))?;
        sync_dir(&staging).map_err(io_err(&staging))?;
        fs::rename(&staging, &dir).map_err(io_err(&dir))?;
        sync_dir(root).map_err(io_err(root))?;
        let log = OpenOptions::new().append(true).open(dir.join(LOG)).map_err(io_err(&dir))?;
        Ok(ProjectDir { dir, log, log_len: 0 })
    }

    /// Appends one change-set and syncs it. On failure the log is cut back to
    /// its previous length so later appends never land behind a torn line.
    pub(crate) fn append(&mut self, batch: &[LogEntry]) -> Result<(), StorageError> {
        let json = serde_json::to_string(batch).expect("log entries serialize");
        let line = format!("{:08x} {json}\n", crc32fast::hash(json.as_bytes()));
        let result = self.log.write_all(line.as_bytes()).and_then(|_| self.log.sync_data());
        match result {
            Ok(()) => {
                self.log_len += line.len() as u64;
                Ok(())
            }
            Err(e) => {
                let _ = self.log.set_len(self.log_len);
                Err(StorageError::Io {
                    path: self.dir.join(LOG),
                    source: e,
                })
            }
        }
    }

    pub(crate) fn write_snapshot(&self, doc: &[u8]) -> Result<(), StorageError> {
        let tmp = self.dir.join(format!("{SNAPSHOT}.tmp"));
        write_synced(&tmp, doc).map_err(io_err(&tmp))?;
        fs::rename(&tmp, self.dir.join(SNAPSHOT)).map_err(io_err(&self.dir))?;
        sync_dir(&self.dir).map_err(io_err(&self.dir))
    }
}

fn write_synced(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let mut f = File::create(path)?;
    f.write_all(bytes)?;
    f.sync_all()
}

/// What `read_log` found.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRecovery {
    pub entries: Vec<LogEntry>,
    /// Byte length of the intact prefix.
    pub valid_len: u64,
    /// Bytes past the intact prefix (torn or corrupt tail).
    pub discarded: u64,
}

/// Parses the longest intact prefix of a log. `first_revision` is the
/// revision the first entry must carry.
pub fn read_log(bytes: &[u8], first_revision: u64) -> LogRecovery {
    let mut entries = Vec::new();
    let mut offset = 0usize;
    let mut expected = first_revision;
    while offset < bytes.len() {
        let Some(nl) = bytes[offset..].iter().position(|&b| b == b'\n') else {
            break;
        };
        let line = &bytes[offset..offset + nl];
        let Some(batch) = parse_line(line) else {
            break;
        };
        if batch.is_empty() || batch.iter().enumerate().any(|(i, e)| e.revision != expected + i as u64) {
            break;
        }
        expected += batch.len() as u64;
        entries.extend(batch);
        offset += nl + 1;
    }
    LogRecovery {
        entries,
        valid_len: offset as u64,
        discarded: (bytes.len() - offset) as u64,
    }
}

fn parse_line(line: &[u8]) -> Option<Vec<LogEntry>> {
    if line.len() < 10 || line[8] != b' ' {
        return None;
    }
    let crc = u32::from_str_radix(std::str::from_utf8(&line[..8]).ok()?, 16).ok()?;
    let json = &line[9..];
    if crc32fast::hash(json) != crc {
        return None;
    }
    serde_json::from_slice(json).ok()
}

pub(crate) struct Recovered {
    pub base: Project,
    pub log: Vec<LogEntry>,
    pub project: Project,
    pub dir: ProjectDir,
}

fn load_file(path: &Path) -> Result<Project, StorageError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    load_project(&bytes)
        .map(|l| l.project)
        .map_err(|source| StorageError::Document {
            path: path.to_owned(),
            source,
        })
}

pub(crate) fn recover(dir: &Path) -> Result<Recovered, StorageError> {
    let base = load_file(&dir.join(BASE))?;
    let log_path = dir.join(LOG);
    let bytes = match fs::read(&log_path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(io_err(&log_path)(e)),
    };
    let rec = read_log(&bytes, base.revision() + 1);
    let log = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&log_path)
        .map_err(io_err(&log_path))?;
    if rec.discarded > 0 {
        tracing::warn!(path = %log_path.display(), bytes = rec.discarded, "discarding torn log tail");
        log.set_len(rec.valid_len)
            .and_then(|_| log.sync_all())
            .map_err(io_err(&log_path))?;
    }
    let head = base.revision() + rec.entries.len() as u64;

    // A snapshot is only a shortcut; anything odd about it and we replay
    // from the base document instead.
    let snapshot = load_file(&dir.join(SNAPSHOT))
        .ok()
        .filter(|s| s.pid() == base.pid() && s.revision() >= base.revision() && s.revision() <= head);
    let mut project = snapshot.unwrap_or_else(|| base.clone());
    let skip = (project.revision() - base.revision()) as usize;
    for e in &rec.entries[skip..] {
        apply_logged(&mut project, e).map_err(|source| StorageError::Replay {
            path: log_path.clone(),
            source,
        })?;
    }
    Ok(Recovered {
        base,
        log: rec.entries,
        project,
        dir: ProjectDir {
            dir: dir.to_owned(),
            log,
            log_len: rec.valid_len,
        },
    })
}

pub(crate) fn recover_all(root: &Path) -> Result<Vec<Recovered>, StorageError> {
    if !root.exists() {
        fs::create_dir_all(root).map_err(io_err(root))?;
        return Ok(Vec::new());
    }
    let mut dirs = Vec::new();
    for entry in fs::read_dir(root).map_err(io_err(root))? {
        let entry = entry.map_err(io_err(root))?;
        let path = entry.path();
        if !path.is_dir() {
            continue;
        }
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.starts_with(TMP_PREFIX) {
            // creation that never completed
            let _ = fs::remove_dir_all(&path);
            continue;
        }
        if path.join(BASE).exists() {
            dirs.push(path);
        }
    }
    dirs.sort();
    dirs.iter().map(|d| recover(d)).collect()
}
