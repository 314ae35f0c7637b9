//! Policy storage: an in-memory map of policies, optionally mirrored to a
//! directory holding one `<sha256(uid)>.odrl.json` file per policy.
//!
//! Readers take cheap snapshots ([`PolicyStore::snapshot`]); writers are
//! serialized and publish a new snapshot only after the backing file has
//! been atomically replaced, so a reader never sees a torn state.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::odrl::{parse_policy, serialize_policy, Policy, PolicyError, PolicyFormat, ValidationError};

/// Policies keyed by uid.
pub type PolicySet = BTreeMap<String, Policy>;

pub const POLICY_FILE_SUFFIX: &str = ".odrl.json";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("policy {0} not found")]
    NotFound(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("invalid policy file {path}: {source}")]
    InvalidFile {
        path: PathBuf,
        #[source]
        source: PolicyError,
    },
    #[error(transparent)]
    Validation(#[from] ValidationError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Backing {
    Memory,
    File(PathBuf),
}

#[derive(Debug)]
pub struct PolicyStore {
    backing: Backing,
    current: RwLock<Arc<PolicySet>>,
    writer: Mutex<()>,
}

impl PartialEq for PolicyStore {
    fn eq(&self, other: &Self) -> bool {
        *self.snapshot() == *other.snapshot()
    }
}

/// File name for a policy uid inside a store directory.
pub fn policy_file_name(uid: &str) -> String {
    format!("{}{POLICY_FILE_SUFFIX}", hex::encode(Sha256::digest(uid.as_bytes())))
}

impl Default for PolicyStore {
    fn default() -> Self {
        Self::in_memory()
    }
}

impl PolicyStore {
    pub fn in_memory() -> Self {
        Self::with_backing(Backing::Memory, PolicySet::new())
    }

    fn with_backing(backing: Backing, set: PolicySet) -> Self {
        Self {
            backing,
            current: RwLock::new(Arc::new(set)),
            writer: Mutex::new(()),
        }
    }

    /// In-memory store pre-populated with `policies`.
    pub fn from_policies(policies: impl IntoIterator<Item = Policy>) -> Result<Self, StoreError> {
        let store = Self::in_memory();
        for p in policies {
            store.put(p)?;
        }
        Ok(store)
    }

    /// Loads a file-backed store from `dir`. Later mutations write through.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        let dir = dir.as_ref();
        let set = read_dir_policies(dir)?;
        Ok(Self::with_backing(Backing::File(dir.to_path_buf()), set))
    }

    /// Like [`PolicyStore::load`], creating `dir` when it does not exist.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        Self::load(dir)
    }

    pub fn backing(&self) -> &Backing {
        &self.backing
    }

    /// Writes every policy into `dir` and removes policy files for uids no
    /// longer present.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), StoreError> {
        let dir = dir.as_ref();
        let _guard = self.writer.lock().expect("store writer poisoned");
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let snapshot = self.snapshot();
        let keep: std::collections::BTreeSet<String> =
            snapshot.keys().map(|uid| policy_file_name(uid)).collect();
        for policy in snapshot.values() {
            write_atomic(&dir.join(policy_file_name(&policy.uid)), &serialize_policy(policy))?;
        }
        for entry in fs::read_dir(dir).map_err(io_err(dir))? {
            let entry = entry.map_err(io_err(dir))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if name.ends_with(POLICY_FILE_SUFFIX) && !keep.contains(&name) {
                fs::remove_file(entry.path()).map_err(io_err(&entry.path()))?;
            }
        }
        Ok(())
    }

    /// Re-reads a file-backed store from disk. No-op for memory backing.
    pub fn reload(&self) -> Result<(), StoreError> {
        if let Backing::File(dir) = &self.backing {
            let _guard = self.writer.lock().expect("store writer poisoned");
            let set = read_dir_policies(dir)?;
            *self.current.write().expect("store lock poisoned") = Arc::new(set);
        }
        Ok(())
    }

    /// Consistent point-in-time view of all policies.
    pub fn snapshot(&self) -> Arc<PolicySet> {
        Arc::clone(&self.current.read().expect("store lock poisoned"))
    }

    /// Inserts or replaces a policy.
    pub fn put(&self, policy: Policy) -> Result<(), StoreError> {
        policy.validate()?;
        let _guard = self.writer.lock().expect("store writer poisoned");
        let mut next = (*self.snapshot()).clone();
        check_rule_ownership(&next, &policy)?;
        if let Backing::File(dir) = &self.backing {
            write_atomic(&dir.join(policy_file_name(&policy.uid)), &serialize_policy(&policy))?;
        }
        next.insert(policy.uid.clone(), policy);
        *self.current.write().expect("store lock poisoned") = Arc::new(next);
        Ok(())
    }

    pub fn get(&self, uid: &str) -> Result<Policy, StoreError> {
        self.snapshot()
            .get(uid)
            .cloned()
            .ok_or_else(|| StoreError::NotFound(uid.to_string()))
    }

    pub fn delete(&self, uid: &str) -> Result<Policy, StoreError> {
        let _guard = self.writer.lock().expect("store writer poisoned");
        let mut next = (*self.snapshot()).clone();
        let removed = next.remove(uid).ok_or_else(|| StoreError::NotFound(uid.to_string()))?;
        if let Backing::File(dir) = &self.backing {
            let path = dir.join(policy_file_name(uid));
            match fs::remove_file(&path) {
                Ok(()) => {}
                Err(e) if e.kind() == io::ErrorKind::NotFound => {}
                Err(e) => return Err(io_err(&path)(e)),
            }
        }
        *self.current.write().expect("store lock poisoned") = Arc::new(next);
        Ok(removed)
    }

    /// Policy uids in sorted order.
    pub fn list(&self) -> Vec<String> {
        self.snapshot().keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.snapshot().len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshot().is_empty()
    }
}

/// A rule uid may appear in only one policy of a store.
fn check_rule_ownership(set: &PolicySet, incoming: &Policy) -> Result<(), ValidationError> {
    for (uid, existing) in set {
        if *uid == incoming.uid {
            continue;
        }
        if let Some(r) = incoming
            .rules
            .iter()
            .find(|r| existing.rules.iter().any(|e| e.uid == r.uid))
        {
            return Err(ValidationError::DuplicateRule(r.uid.clone()));
        }
    }
    Ok(())
}

fn read_dir_policies(dir: &Path) -> Result<PolicySet, StoreError> {
    let mut set = PolicySet::new();
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.ends_with(POLICY_FILE_SUFFIX) && !n.starts_with('.'))
        })
        .collect();
    paths.sort();
    for path in paths {
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        let policy = parse_policy(&bytes, PolicyFormat::OdrlJson)
            .map_err(|source| StoreError::InvalidFile { path: path.clone(), source })?;
        check_rule_ownership(&set, &policy)?;
        set.insert(policy.uid.clone(), policy);
    }
    Ok(set)
}

/// Writes `bytes` to a sibling temp file, syncs it and renames it over
/// `path`.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    use std::io::Write;
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let tmp = dir.join(format!(
        ".{}.{}.tmp",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("policy"),
        uuid::Uuid::new_v4().simple()
    ));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(io_err(path)(e));
    }
    Ok(())
}
