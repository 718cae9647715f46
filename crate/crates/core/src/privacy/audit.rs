//! Append-only, SHA-256 hash-chained audit log.
//!
//! `entry_hash = SHA-256(prev_hash ‖ canonical(entry without entry_hash))`,
//! with 32 zero bytes as the genesis `prev_hash`. On disk the log is one
//! canonical entry per line, hashes in lowercase hex.

use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, SubsecRound, Utc};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::canonical::{canonical_bytes, canonical_serialize};
use crate::clock::Clock;
use crate::domain::Role;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Allow,
    Deny,
    Error,
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct ChainHash(pub [u8; 32]);

impl ChainHash {
    pub const GENESIS: ChainHash = ChainHash([0u8; 32]);

    pub fn to_hex(self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for ChainHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ChainHash({})", self.to_hex())
    }
}

impl fmt::Display for ChainHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl std::str::FromStr for ChainHash {
    type Err = hex::FromHexError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out)?;
        Ok(ChainHash(out))
    }
}

impl Serialize for ChainHash {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for ChainHash {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

mod timestamp {
    use chrono::{DateTime, Utc};
    use serde::{Deserialize, Deserializer, Serializer};

    const FORMAT: &str = "%Y-%m-%dT%H:%M:%S%.6fZ";

    pub fn serialize<S: Serializer>(t: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&t.format(FORMAT).to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
        let s = String::deserialize(d)?;
        DateTime::parse_from_rfc3339(&s)
            .map(|t| t.with_timezone(&Utc))
            .map_err(serde::de::Error::custom)
    }
}

/// The caller-supplied part of an entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditEvent {
    pub actor_id: String,
    pub role: Option<Role>,
    pub action: String,
    pub resource_class: String,
    pub resource_id: String,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditEntry {
    pub seq: u64,
    #[serde(with = "timestamp")]
    pub timestamp: DateTime<Utc>,
    pub actor_id: String,
    pub role: Option<Role>,
    pub action: String,
    pub resource_class: String,
    pub resource_id: String,
    pub outcome: Outcome,
    pub prev_hash: ChainHash,
    pub entry_hash: ChainHash,
}

impl AuditEntry {
    /// Canonical bytes of every field except `entry_hash`.
    pub fn body_bytes(&self) -> Vec<u8> {
        let mut value = serde_json::to_value(self).expect("audit entries are JSON");
        if let Some(map) = value.as_object_mut() {
            map.remove("entry_hash");
        }
        canonical_bytes(&value)
    }

    pub fn compute_hash(&self) -> ChainHash {
        let mut h = Sha256::new();
        h.update(self.prev_hash.0);
        h.update(self.body_bytes());
        ChainHash(h.finalize().into())
    }

    /// One line of the audit file, without the trailing newline.
    pub fn to_line(&self) -> Vec<u8> {
        canonical_serialize(self)
    }
}

/// Length and last hash of a chain; enough to detect truncation or an
/// appended forgery when checked against a later snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainHead {
    pub len: u64,
    pub last_hash: ChainHash,
}

impl ChainHead {
    pub const EMPTY: ChainHead = ChainHead {
        len: 0,
        last_hash: ChainHash::GENESIS,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum VerifyOutcome {
    Ok,
    Tampered { first_bad_seq: u64 },
}

impl VerifyOutcome {
    pub fn is_ok(self) -> bool {
        matches!(self, VerifyOutcome::Ok)
    }
}

/// Checks seq, link and hash of every entry; reports the smallest
/// violating position.
pub fn verify_chain(entries: &[AuditEntry]) -> VerifyOutcome {
    let mut prev = ChainHash::GENESIS;
    for (i, entry) in entries.iter().enumerate() {
        let i = i as u64;
        if entry.seq != i || entry.prev_hash != prev || entry.compute_hash() != entry.entry_hash {
            return VerifyOutcome::Tampered { first_bad_seq: i };
        }
        prev = entry.entry_hash;
    }
    VerifyOutcome::Ok
}

/// Like [`verify_chain`], and additionally requires the chain to end exactly
/// at `head`.
pub fn verify_chain_against(entries: &[AuditEntry], head: &ChainHead) -> VerifyOutcome {
    match verify_chain(entries) {
        VerifyOutcome::Ok => check_head(
            entries.len() as u64,
            entries.last().map_or(ChainHash::GENESIS, |e| e.entry_hash),
            head,
        ),
        bad => bad,
    }
}

fn check_head(len: u64, last_hash: ChainHash, head: &ChainHead) -> VerifyOutcome {
    if len < head.len {
        VerifyOutcome::Tampered { first_bad_seq: len }
    } else if len > head.len {
        VerifyOutcome::Tampered {
            first_bad_seq: head.len,
        }
    } else if last_hash != head.last_hash {
        VerifyOutcome::Tampered {
            first_bad_seq: len.saturating_sub(1),
        }
    } else {
        VerifyOutcome::Ok
    }
}

fn log_lines(bytes: &[u8]) -> impl Iterator<Item = &[u8]> {
    let body = bytes.strip_suffix(b"\n").unwrap_or(bytes);
    let empty = body.is_empty();
    body.split(|b| *b == b'\n').filter(move |_| !empty)
}

/// A line is accepted only if it parses and is byte-identical to the
/// canonical form of what it parses to.
fn parse_line(line: &[u8]) -> Option<AuditEntry> {
    let entry: AuditEntry = serde_json::from_slice(line).ok()?;
    (entry.to_line() == line).then_some(entry)
}

/// Parses an audit file; the error carries the first unreadable line.
pub fn parse_log(bytes: &[u8]) -> Result<Vec<AuditEntry>, VerifyOutcome> {
    log_lines(bytes)
        .enumerate()
        .map(|(i, line)| {
            parse_line(line).ok_or(VerifyOutcome::Tampered {
                first_bad_seq: i as u64,
            })
        })
        .collect()
}

/// Verifies a serialized log, optionally against a known head. Unreadable
/// or non-canonical lines count as tampering at their position.
pub fn verify_log_bytes(bytes: &[u8], head: Option<&ChainHead>) -> VerifyOutcome {
    let mut prev = ChainHash::GENESIS;
    let mut len = 0u64;
    for (i, line) in log_lines(bytes).enumerate() {
        let i = i as u64;
        let bad = VerifyOutcome::Tampered { first_bad_seq: i };
        let Some(entry) = parse_line(line) else {
            return bad;
        };
        if entry.seq != i || entry.prev_hash != prev || entry.compute_hash() != entry.entry_hash {
            return bad;
        }
        prev = entry.entry_hash;
        len = i + 1;
    }
    match head {
        Some(head) => check_head(len, prev, head),
        None => VerifyOutcome::Ok,
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AuditError {
    #[error("audit log i/o: {0}")]
    Io(#[from] io::Error),
    #[error("existing audit log failed verification at seq {first_bad_seq}")]
    Tampered { first_bad_seq: u64 },
}

enum Backend {
    Memory(Vec<AuditEntry>),
    File { path: PathBuf, file: File },
}

struct State {
    head: ChainHead,
    backend: Backend,
}

/// The single appender. Appends are serialized by an internal lock.
pub struct AuditLog {
    state: Mutex<State>,
    clock: Arc<dyn Clock>,
}

impl fmt::Debug for AuditLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AuditLog")
            .field("head", &self.head())
            .finish()
    }
}

impl AuditLog {
    pub fn in_memory(clock: Arc<dyn Clock>) -> Self {
        AuditLog {
            state: Mutex::new(State {
                head: ChainHead::EMPTY,
                backend: Backend::Memory(Vec::new()),
            }),
            clock,
        }
    }

    /// Opens (or creates) a line-delimited audit file and resumes its chain.
    /// An existing file must verify cleanly.
    pub fn open_file(path: impl AsRef<Path>, clock: Arc<dyn Clock>) -> Result<Self, AuditError> {
        let path = path.as_ref().to_path_buf();
        let existing = match std::fs::read(&path) {
            Ok(bytes) => bytes,
            Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        if let VerifyOutcome::Tampered { first_bad_seq } = verify_log_bytes(&existing, None) {
            return Err(AuditError::Tampered { first_bad_seq });
        }
        let entries = parse_log(&existing).unwrap_or_default();
        let head = ChainHead {
            len: entries.len() as u64,
            last_hash: entries.last().map_or(ChainHash::GENESIS, |e| e.entry_hash),
        };
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(AuditLog {
            state: Mutex::new(State {
                head,
                backend: Backend::File { path, file },
            }),
            clock,
        })
    }

    pub fn append(&self, event: AuditEvent) -> Result<AuditEntry, AuditError> {
        let mut state = self.state.lock();
        let mut entry = AuditEntry {
            seq: state.head.len,
            timestamp: self.clock.now().trunc_subsecs(6),
            actor_id: event.actor_id,
            role: event.role,
            action: event.action,
            resource_class: event.resource_class,
            resource_id: event.resource_id,
            outcome: event.outcome,
            prev_hash: state.head.last_hash,
            entry_hash: ChainHash::GENESIS,
        };
        entry.entry_hash = entry.compute_hash();

        match &mut state.backend {
            Backend::Memory(entries) => entries.push(entry.clone()),
            Backend::File { file, .. } => {
                let mut line = entry.to_line();
                line.push(b'\n');
                file.write_all(&line)?;
                file.flush()?;
            }
        }
        state.head = ChainHead {
            len: entry.seq + 1,
            last_hash: entry.entry_hash,
        };
        Ok(entry)
    }

    pub fn head(&self) -> ChainHead {
        self.state.lock().head
    }

    pub fn len(&self) -> u64 {
        self.head().len
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn path(&self) -> Option<PathBuf> {
        match &self.state.lock().backend {
            Backend::Memory(_) => None,
            Backend::File { path, .. } => Some(path.clone()),
        }
    }

    /// Entries as currently stored. For a file backend this re-reads the
    /// file, so external edits are visible.
    pub fn entries(&self) -> Result<Vec<AuditEntry>, AuditError> {
        let state = self.state.lock();
        match &state.backend {
            Backend::Memory(entries) => Ok(entries.clone()),
            Backend::File { path, .. } => {
                let bytes = std::fs::read(path)?;
                parse_log(&bytes).map_err(|outcome| match outcome {
                    VerifyOutcome::Tampered { first_bad_seq } => {
                        AuditError::Tampered { first_bad_seq }
                    }
                    VerifyOutcome::Ok => unreachable!(),
                })
            }
        }
    }

    /// Verifies a consistent snapshot of the stored log against the
    /// in-memory head.
    pub fn verify(&self) -> Result<VerifyOutcome, AuditError> {
        let state = self.state.lock();
        match &state.backend {
            Backend::Memory(entries) => Ok(verify_chain_against(entries, &state.head)),
            Backend::File { path, .. } => {
                let bytes = std::fs::read(path)?;
                Ok(verify_log_bytes(&bytes, Some(&state.head)))
            }
        }
    }

    /// Test hook: edit the in-memory entries directly.
    #[doc(hidden)]
    pub fn tamper_in_memory(&self, f: impl FnOnce(&mut Vec<AuditEntry>)) {
        if let Backend::Memory(entries) = &mut self.state.lock().backend {
            f(entries);
        }
    }
}
