//! Shared projects for teams of annotators.
//!
//! Clients pull the operations accepted since the revision they hold and
//! push change-sets written against that revision. Every project has one
//! logical writer: pushes are totally ordered, each accepted operation bumps
//! the revision by one and is appended to the project's revision log.
//!
//! Conflicts are resolved per entry. An upsert or delete of entry `m` whose
//! `base_revision` is older than the last accepted write to `m` is
//! `Superseded`: the first writer wins and the late writer is told so,
//! instead of silently overwriting work it never saw.

mod storage;
pub mod http;

use std::collections::{HashMap, HashSet};
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{EntryDraft, MetadataId, ModelError, Project};
use crate::serialization::{self, canonical_bytes, LoadError};

pub use storage::{read_log, LogRecovery, StorageError};

/// One operation of a change-set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum Op {
    /// Insert a new entry (no `mid`) or replace an existing one.
    Upsert {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mid: Option<MetadataId>,
        entry: EntryDraft,
    },
    Delete { mid: MetadataId },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeSet {
    pub client_id: String,
    pub base_revision: u64,
    pub ops: Vec<Op>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum OpStatus {
    Applied { mid: MetadataId, revision: u64 },
    Rejected { cause: String },
    /// `last_write` is the revision of the write that won.
    Superseded { mid: MetadataId, last_write: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PushOutcome {
    pub accepted: Vec<OpStatus>,
    pub revision: u64,
}

/// An accepted operation as recorded in the revision log. Inserts carry
/// the id the server minted so replicas can check they agree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum LoggedOp {
    Insert { mid: MetadataId, entry: EntryDraft },
    Update { mid: MetadataId, entry: EntryDraft },
    Delete { mid: MetadataId },
}

impl LoggedOp {
    pub fn mid(&self) -> &MetadataId {
        match self {
            LoggedOp::Insert { mid, .. } | LoggedOp::Update { mid, .. } | LoggedOp::Delete { mid } => mid,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub revision: u64,
    pub client_id: String,
    pub op: LoggedOp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Changes {
    pub revision: u64,
    pub ops: Vec<LogEntry>,
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("log entry has revision {found}, expected {expected}")]
    OutOfOrder { expected: u64, found: u64 },
    #[error("insert minted {minted}, log says {logged}")]
    IdMismatch { logged: MetadataId, minted: MetadataId },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Applies one logged operation to a replica.
pub fn apply_logged(project: &mut Project, entry: &LogEntry) -> Result<(), ReplayError> {
    let expected = project.revision() + 1;
    if entry.revision != expected {
        return Err(ReplayError::OutOfOrder {
            expected,
            found: entry.revision,
        });
    }
    match &entry.op {
        LoggedOp::Insert { mid, entry } => {
            let minted = project.insert_metadata(entry.clone())?;
            if &minted != mid {
                return Err(ReplayError::IdMismatch {
                    logged: mid.clone(),
                    minted,
                });
            }
        }
        LoggedOp::Update { mid, entry } => {
            project.upsert_metadata(Some(mid), entry.clone())?;
        }
        LoggedOp::Delete { mid } => {
            project.delete_metadata(mid)?;
        }
    }
    Ok(())
}

#[derive(Debug, Error)]
pub enum HubError {
    #[error("unknown project {0}")]
    NotFound(String),
    #[error("project {0} already exists")]
    Duplicate(String),
    #[error("project id {0:?} is not usable (letters, digits, '-', '_', '.')")]
    BadPid(String),
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error("revision {requested} is ahead of the server ({head})")]
    RevisionAhead { requested: u64, head: u64 },
    #[error("revision {requested} predates the log, which starts after {floor}")]
    RevisionBeforeLog { requested: u64, floor: u64 },
    #[error("malformed change-set: {0}")]
    Malformed(String),
    #[error("unknown export format {0:?}")]
    UnknownFormat(String),
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
}

#[derive(Debug, Clone)]
pub struct HubConfig {
    /// Where projects are persisted; `None` keeps everything in memory.
    pub data_dir: Option<PathBuf>,
    /// Accepted operations between two snapshots.
    pub snapshot_interval: u64,
}

impl Default for HubConfig {
    fn default() -> Self {
        Self {
            data_dir: None,
            snapshot_interval: 100,
        }
    }
}

struct Slot {
    project: Project,
    /// The project as it was created; the log replays on top of it.
    base: Project,
    log: Vec<LogEntry>,
    last_write: HashMap<MetadataId, u64>,
    dir: Option<storage::ProjectDir>,
    since_snapshot: u64,
}

impl Slot {
    fn new(base: Project, log: Vec<LogEntry>, project: Project, dir: Option<storage::ProjectDir>) -> Self {
        let mut last_write = HashMap::new();
        for e in &log {
            last_write.insert(e.op.mid().clone(), e.revision);
        }
        Slot {
            project,
            base,
            log,
            last_write,
            dir,
            since_snapshot: 0,
        }
    }

    fn snapshot(&mut self) -> Result<(), StorageError> {
        if let Some(dir) = &self.dir {
            dir.write_snapshot(&canonical_bytes(&self.project))?;
        }
        self.since_snapshot = 0;
        Ok(())
    }
}

/// The project store behind the HTTP service. All methods are blocking and
/// safe to call from many threads; writes to one project are serialized.
pub struct Hub {
    config: HubConfig,
    projects: RwLock<HashMap<String, Arc<RwLock<Slot>>>>,
}

fn valid_pid(pid: &str) -> bool {
    !pid.is_empty()
        && pid.len() <= 128
        && !pid.starts_with('.')
        && pid.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

impl Hub {
    pub fn in_memory() -> Hub {
        Hub {
            config: HubConfig::default(),
            projects: RwLock::new(HashMap::new()),
        }
    }

    /// Opens (and recovers) every project stored under `config.data_dir`.
    pub fn open(config: HubConfig) -> Result<Hub, HubError> {
        let mut projects = HashMap::new();
        if let Some(root) = &config.data_dir {
            for rec in storage::recover_all(root)? {
                let slot = Slot::new(rec.base, rec.log, rec.project, Some(rec.dir));
                projects.insert(slot.project.pid().to_owned(), Arc::new(RwLock::new(slot)));
            }
        }
        Ok(Hub {
            config,
            projects: RwLock::new(projects),
        })
    }

    fn slot(&self, pid: &str) -> Result<Arc<RwLock<Slot>>, HubError> {
        self.projects
            .read()
            .expect("project table poisoned")
            .get(pid)
            .cloned()
            .ok_or_else(|| HubError::NotFound(pid.to_owned()))
    }

    pub fn project_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.projects.read().expect("project table poisoned").keys().cloned().collect();
        ids.sort();
        ids
    }

    /// Registers a project from its canonical document.
    pub fn create(&self, doc: &[u8]) -> Result<(String, u64), HubError> {
        let project = serialization::load_project(doc)?.project;
        let pid = project.pid().to_owned();
        if !valid_pid(&pid) {
            return Err(HubError::BadPid(pid));
        }
        let mut table = self.projects.write().expect("project table poisoned");
        if table.contains_key(&pid) {
            return Err(HubError::Duplicate(pid));
        }
        let dir = match &self.config.data_dir {
            Some(root) => Some(storage::ProjectDir::create(root, &pid, &canonical_bytes(&project))?),
            None => None,
        };
        let revision = project.revision();
        let slot = Slot::new(project.clone(), Vec::new(), project, dir);
        table.insert(pid.clone(), Arc::new(RwLock::new(slot)));
        Ok((pid, revision))
    }

    pub fn document(&self, pid: &str) -> Result<Vec<u8>, HubError> {
        let slot = self.slot(pid)?;
        let slot = slot.read().expect("project poisoned");
        Ok(canonical_bytes(&slot.project))
    }

    pub fn project(&self, pid: &str) -> Result<Project, HubError> {
        let slot = self.slot(pid)?;
        let slot = slot.read().expect("project poisoned");
        Ok(slot.project.clone())
    }

    pub fn revision(&self, pid: &str) -> Result<u64, HubError> {
        let slot = self.slot(pid)?;
        let slot = slot.read().expect("project poisoned");
        Ok(slot.project.revision())
    }

    /// Operations accepted after revision `since`, in log order.
    pub fn changes_since(&self, pid: &str, since: u64) -> Result<Changes, HubError> {
        let slot = self.slot(pid)?;
        let slot = slot.read().expect("project poisoned");
        let head = slot.project.revision();
        let floor = slot.base.revision();
        if since > head {
            return Err(HubError::RevisionAhead { requested: since, head });
        }
        if since < floor {
            return Err(HubError::RevisionBeforeLog { requested: since, floor });
        }
        let skip = (since - floor) as usize;
        Ok(Changes {
            revision: head,
            ops: slot.log[skip..].to_vec(),
        })
    }

    pub fn push(&self, pid: &str, cs: ChangeSet) -> Result<PushOutcome, HubError> {
        if cs.client_id.trim().is_empty() {
            return Err(HubError::Malformed("client_id is required".into()));
        }
        if cs.ops.is_empty() {
            return Err(HubError::Malformed("a change-set needs at least one op".into()));
        }
        let slot = self.slot(pid)?;
        let mut slot = slot.write().expect("project poisoned");
        let head = slot.project.revision();
        if cs.base_revision > head {
            return Err(HubError::RevisionAhead {
                requested: cs.base_revision,
                head,
            });
        }

        let mut work = slot.project.clone();
        let mut written: HashSet<MetadataId> = HashSet::new();
        let mut batch = Vec::new();
        let mut accepted = Vec::with_capacity(cs.ops.len());
        for op in cs.ops {
            let stale = |mid: &MetadataId| {
                slot.last_write
                    .get(mid)
                    .filter(|&&rev| rev > cs.base_revision && !written.contains(mid))
                    .copied()
            };
            let (status, logged) = match op {
                Op::Upsert { mid: None, entry } => match work.insert_metadata(entry.clone()) {
                    Ok(mid) => (
                        OpStatus::Applied {
                            mid: mid.clone(),
                            revision: work.revision(),
                        },
                        Some(LoggedOp::Insert { mid, entry }),
                    ),
                    Err(e) => (OpStatus::Rejected { cause: e.to_string() }, None),
                },
                Op::Upsert { mid: Some(mid), entry } => {
                    if work.entry(mid.as_str()).is_none() {
                        (
                            OpStatus::Rejected {
                                cause: ModelError::UnknownMetadata(mid).to_string(),
                            },
                            None,
                        )
                    } else if let Some(last_write) = stale(&mid) {
                        (OpStatus::Superseded { mid, last_write }, None)
                    } else {
                        match work.upsert_metadata(Some(&mid), entry.clone()) {
                            Ok(_) => (
                                OpStatus::Applied {
                                    mid: mid.clone(),
                                    revision: work.revision(),
                                },
                                Some(LoggedOp::Update { mid, entry }),
                            ),
                            Err(e) => (OpStatus::Rejected { cause: e.to_string() }, None),
                        }
                    }
                }
                Op::Delete { mid } => {
                    if work.entry(mid.as_str()).is_none() {
                        (
                            OpStatus::Rejected {
                                cause: ModelError::UnknownMetadata(mid).to_string(),
                            },
                            None,
                        )
                    } else if let Some(last_write) = stale(&mid) {
                        (OpStatus::Superseded { mid, last_write }, None)
                    } else {
                        work.delete_metadata(&mid).expect("entry exists");
                        (
                            OpStatus::Applied {
                                mid: mid.clone(),
                                revision: work.revision(),
                            },
                            Some(LoggedOp::Delete { mid }),
                        )
                    }
                }
            };
            if let Some(op) = logged {
                written.insert(op.mid().clone());
                batch.push(LogEntry {
                    revision: work.revision(),
                    client_id: cs.client_id.clone(),
                    op,
                });
            }
            accepted.push(status);
        }

        if !batch.is_empty() {
            // Durable first, visible second: a crash before the append
            // completes leaves no trace of this change-set.
            if let Some(dir) = slot.dir.as_mut() {
                dir.append(&batch)?;
            }
            for e in &batch {
                slot.last_write.insert(e.op.mid().clone(), e.revision);
            }
            slot.since_snapshot += batch.len() as u64;
            slot.log.extend(batch);
            slot.project = work;
            if slot.since_snapshot >= self.config.snapshot_interval.max(1) {
                if let Err(e) = slot.snapshot() {
                    // the log already holds everything; a missed snapshot
                    // only lengthens the next recovery
                    tracing::warn!(pid, error = %e, "snapshot failed");
                }
            }
        }
        Ok(PushOutcome {
            accepted,
            revision: slot.project.revision(),
        })
    }

    pub fn export(&self, pid: &str, format: &str) -> Result<Vec<u8>, HubError> {
        let slot = self.slot(pid)?;
        let slot = slot.read().expect("project poisoned");
        match format {
            "csv" => Ok(serialization::export_csv(&slot.project).expect("hub projects are always valid")),
            "json" => Ok(canonical_bytes(&slot.project)),
            other => Err(HubError::UnknownFormat(other.to_owned())),
        }
    }

    /// Rebuilds a project from its creation document and the full log.
    pub fn replay(&self, pid: &str) -> Result<Project, HubError> {
        let slot = self.slot(pid)?;
        let slot = slot.read().expect("project poisoned");
        let mut p = slot.base.clone();
        for e in &slot.log {
            apply_logged(&mut p, e)?;
        }
        Ok(p)
    }

    /// Writes a snapshot of every project that changed since its last one.
    pub fn flush(&self) -> Result<(), HubError> {
        let slots: Vec<_> = self.projects.read().expect("project table poisoned").values().cloned().collect();
        for slot in slots {
            let mut slot = slot.write().expect("project poisoned");
            if slot.since_snapshot > 0 {
                slot.snapshot()?;
            }
        }
        Ok(())
    }
}
