//! Document backends: in-memory and a single-file append/compact store.
//!
//! The file store keeps one canonical [`StoredDocument`] per line. A later
//! line for the same patient supersedes earlier ones; `compact` rewrites the
//! file with only the latest version of each document.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::canonical::canonical_serialize;

pub const SCHEMA_VERSION: u32 = 1;

/// A patient document as persisted: PHI values replaced by envelopes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoredDocument {
    pub patient_id: String,
    pub schema_version: u32,
    pub body: Value,
}

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("storage I/O failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("stored document on line {line} is malformed")]
    Corrupt { line: usize },
}

/// Atomic per-document upsert and lookup.
pub trait DocumentStore: Send + Sync + std::fmt::Debug {
    fn get(&self, patient_id: &str) -> Result<Option<StoredDocument>, BackendError>;
    fn put(&self, doc: StoredDocument) -> Result<(), BackendError>;
    fn ids(&self) -> Result<Vec<String>, BackendError>;
}

#[derive(Debug, Default)]
pub struct InMemoryStore {
    docs: RwLock<BTreeMap<String, Vec<u8>>>,
}

impl InMemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Serialized bytes of every stored document, for at-rest scans.
    pub fn raw_bytes(&self) -> Vec<u8> {
        self.docs.read().values().flatten().copied().collect()
    }
}

impl DocumentStore for InMemoryStore {
    fn get(&self, patient_id: &str) -> Result<Option<StoredDocument>, BackendError> {
        self.docs
            .read()
            .get(patient_id)
            .map(|bytes| {
                serde_json::from_slice(bytes).map_err(|_| BackendError::Corrupt { line: 0 })
            })
            .transpose()
    }

    fn put(&self, doc: StoredDocument) -> Result<(), BackendError> {
        let bytes = canonical_serialize(&doc);
        self.docs.write().insert(doc.patient_id, bytes);
        Ok(())
    }

    fn ids(&self) -> Result<Vec<String>, BackendError> {
        Ok(self.docs.read().keys().cloned().collect())
    }
}

#[derive(Debug)]
struct FileState {
    index: BTreeMap<String, StoredDocument>,
    file: File,
    lines: usize,
}

#[derive(Debug)]
pub struct FileStore {
    path: PathBuf,
    state: Mutex<FileState>,
}

impl FileStore {
    /// Opens or creates the store file and loads the latest version of
    /// every document.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, BackendError> {
        let path = path.into();
        let mut index = BTreeMap::new();
        let mut lines = 0;
        if path.exists() {
            let reader = BufReader::new(File::open(&path)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.is_empty() {
                    continue;
                }
                let doc: StoredDocument = serde_json::from_str(&line)
                    .map_err(|_| BackendError::Corrupt { line: i + 1 })?;
                index.insert(doc.patient_id.clone(), doc);
                lines += 1;
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(FileStore {
            path,
            state: Mutex::new(FileState { index, file, lines }),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Rewrites the file with one line per document, via a temporary file
    /// and an atomic rename.
    pub fn compact(&self) -> Result<(), BackendError> {
        let mut state = self.state.lock();
        self.compact_locked(&mut state)
    }

    fn compact_locked(&self, state: &mut FileState) -> Result<(), BackendError> {
        let tmp = self.path.with_extension("compact.tmp");
        {
            let mut out = File::create(&tmp)?;
            for doc in state.index.values() {
                out.write_all(&canonical_serialize(doc))?;
                out.write_all(b"\n")?;
            }
            out.sync_all()?;
        }
        std::fs::rename(&tmp, &self.path)?;
        state.file = OpenOptions::new().append(true).open(&self.path)?;
        state.lines = state.index.len();
        Ok(())
    }
}

impl DocumentStore for FileStore {
    fn get(&self, patient_id: &str) -> Result<Option<StoredDocument>, BackendError> {
        Ok(self.state.lock().index.get(patient_id).cloned())
    }

    fn put(&self, doc: StoredDocument) -> Result<(), BackendError> {
        let mut state = self.state.lock();
        let mut line = canonical_serialize(&doc);
        line.push(b'\n');
        state.file.write_all(&line)?;
        state.file.sync_data()?;
        state.index.insert(doc.patient_id.clone(), doc);
        state.lines += 1;
        if state.lines > 4 * state.index.len() + 16 {
            self.compact_locked(&mut state)?;
        }
        Ok(())
    }

    fn ids(&self) -> Result<Vec<String>, BackendError> {
        Ok(self.state.lock().index.keys().cloned().collect())
    }
}
