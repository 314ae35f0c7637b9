//! File-backed resource manager.
//!
//! Containers are directories and documents are files under the storage
//! root, mirroring the path hierarchy. A document's content type lives in a
//! sidecar file `.meta.<name>.json` next to it. Names starting with `.` are
//! never exposed as resources.
//!
//! Document bodies are replaced by writing a temp file and renaming it over
//! the target, so readers see either the old or the new body. Container
//! membership is the directory listing itself, which makes it change
//! together with child creation and removal.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, MutexGuard};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::mapping::ResourcePath;

pub const DEFAULT_CONTENT_TYPE: &str = "application/octet-stream";
const META_PREFIX: &str = ".meta.";
const TMP_PREFIX: &str = ".tmp.";
const LOCK_STRIPES: usize = 64;

#[derive(Debug, Error)]
pub enum StorageError {
    #[error("{0} not found")]
    NotFound(String),
    #[error("conflict on {path}: {reason}")]
    Conflict { path: String, reason: &'static str },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StorageError + '_ {
    move |source| StorageError::Io { path: path.display().to_string(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResourceKind {
    Document,
    Container,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Resource {
    Document { body: Vec<u8>, content_type: String },
    /// Child paths, containers with a trailing `/`, sorted.
    Container { members: Vec<ResourcePath> },
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct Meta {
    content_type: String,
}

/// Write phases, used to simulate a crash part-way through a write.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum WriteStep {
    TempWritten,
}

#[derive(Debug)]
pub struct ResourceManager {
    root: PathBuf,
    stripes: Vec<Mutex<()>>,
}

impl ResourceManager {
    /// Opens (creating if needed) a storage root and clears leftovers of
    /// interrupted writes.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StorageError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(io_err(&root))?;
        let rm = Self {
            root,
            stripes: (0..LOCK_STRIPES).map(|_| Mutex::new(())).collect(),
        };
        rm.remove_stale_temp_files(&rm.root.clone())?;
        Ok(rm)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn remove_stale_temp_files(&self, dir: &Path) -> Result<(), StorageError> {
        for entry in fs::read_dir(dir).map_err(io_err(dir))? {
            let entry = entry.map_err(io_err(dir))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            let path = entry.path();
            if name.starts_with(TMP_PREFIX) {
                fs::remove_file(&path).map_err(io_err(&path))?;
            } else if entry.file_type().map_err(io_err(&path))?.is_dir() {
                self.remove_stale_temp_files(&path)?;
            }
        }
        Ok(())
    }

    fn fs_path(&self, path: &ResourcePath) -> PathBuf {
        let mut p = self.root.clone();
        p.extend(path.segments());
        p
    }

    fn meta_path(&self, path: &ResourcePath) -> PathBuf {
        let file = self.fs_path(path);
        let name = path.name();
        file.with_file_name(format!("{META_PREFIX}{name}.json"))
    }

    /// Locks the stripes guarding `paths`. Stripes are always taken in
    /// ascending order, which rules out lock-order deadlocks between a
    /// parent and its children.
    fn lock(&self, paths: &[&ResourcePath]) -> Vec<MutexGuard<'_, ()>> {
        use std::hash::{BuildHasher, BuildHasherDefault, DefaultHasher};
        let hasher = BuildHasherDefault::<DefaultHasher>::default();
        let mut idx: Vec<usize> = paths
            .iter()
            .map(|p| (hasher.hash_one(p.as_str()) as usize) % LOCK_STRIPES)
            .collect();
        idx.sort_unstable();
        idx.dedup();
        idx.into_iter()
            .map(|i| self.stripes[i].lock().unwrap_or_else(|e| e.into_inner()))
            .collect()
    }

    /// Kind of the resource at `path`, if it exists.
    pub fn kind(&self, path: &ResourcePath) -> Option<ResourceKind> {
        let meta = fs::metadata(self.fs_path(path)).ok()?;
        match (path.is_container(), meta.is_dir()) {
            (true, true) => Some(ResourceKind::Container),
            (false, false) if meta.is_file() => Some(ResourceKind::Document),
            _ => None,
        }
    }

    pub fn exists(&self, path: &ResourcePath) -> bool {
        self.kind(path).is_some()
    }

    pub fn read(&self, path: &ResourcePath) -> Result<Resource, StorageError> {
        if path.is_container() {
            return self.list(path).map(|members| Resource::Container { members });
        }
        if self.kind(path) != Some(ResourceKind::Document) {
            return Err(StorageError::NotFound(path.to_string()));
        }
        let file = self.fs_path(path);
        let body = fs::read(&file).map_err(|e| match e.kind() {
            io::ErrorKind::NotFound => StorageError::NotFound(path.to_string()),
            _ => io_err(&file)(e),
        })?;
        let content_type = fs::read(self.meta_path(path))
            .ok()
            .and_then(|b| serde_json::from_slice::<Meta>(&b).ok())
            .map(|m| m.content_type)
            .unwrap_or_else(|| DEFAULT_CONTENT_TYPE.to_string());
        Ok(Resource::Document { body, content_type })
    }

    pub fn list(&self, container: &ResourcePath) -> Result<Vec<ResourcePath>, StorageError> {
        if self.kind(container) != Some(ResourceKind::Container) {
            return Err(StorageError::NotFound(container.to_string()));
        }
        let dir = self.fs_path(container);
        let mut members = Vec::new();
        for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
            let entry = entry.map_err(io_err(&dir))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if name.starts_with('.') {
                continue;
            }
            let is_dir = entry.file_type().map_err(io_err(&entry.path()))?.is_dir();
            let child = if is_dir { format!("{container}{name}/") } else { format!("{container}{name}") };
            if let Ok(p) = ResourcePath::parse(&child) {
                members.push(p);
            }
        }
        members.sort();
        Ok(members)
    }

    /// Creates or replaces a resource. Returns `true` when it was created.
    ///
    /// Containers are created empty; writing an existing container is a
    /// no-op. The parent container must already exist.
    pub fn write(&self, path: &ResourcePath, body: &[u8], content_type: &str) -> Result<bool, StorageError> {
        self.write_inner(path, body, content_type, false, None)
    }

    /// Like [`ResourceManager::write`] but fails if the resource exists.
    pub fn create(&self, path: &ResourcePath, body: &[u8], content_type: &str) -> Result<(), StorageError> {
        self.write_inner(path, body, content_type, true, None).map(|_| ())
    }

    pub(crate) fn write_inner(
        &self,
        path: &ResourcePath,
        body: &[u8],
        content_type: &str,
        must_be_new: bool,
        stop_after: Option<WriteStep>,
    ) -> Result<bool, StorageError> {
        let parent = path.parent().ok_or(StorageError::Conflict {
            path: path.to_string(),
            reason: "the root container cannot be replaced",
        })?;
        let _guards = self.lock(&[&parent, path]);
        if self.kind(&parent) != Some(ResourceKind::Container) {
            return Err(StorageError::Conflict { path: path.to_string(), reason: "parent container does not exist" });
        }
        let target = self.fs_path(path);
        let existing = self.kind(path);
        if existing.is_none() && target.exists() {
            return Err(StorageError::Conflict {
                path: path.to_string(),
                reason: "a resource of the other kind exists at this name",
            });
        }
        if must_be_new && existing.is_some() {
            return Err(StorageError::Conflict { path: path.to_string(), reason: "resource already exists" });
        }

        if path.is_container() {
            if existing.is_some() {
                return Ok(false);
            }
            fs::create_dir(&target).map_err(io_err(&target))?;
            return Ok(true);
        }

        let dir = target.parent().expect("documents live in a directory");
        let tmp = dir.join(format!("{TMP_PREFIX}{}.{}", path.name(), uuid::Uuid::new_v4().simple()));
        let write_tmp = || -> io::Result<()> {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(body)?;
            f.sync_all()
        };
        if let Err(e) = write_tmp() {
            let _ = fs::remove_file(&tmp);
            return Err(io_err(&tmp)(e));
        }
        if stop_after == Some(WriteStep::TempWritten) {
            return Ok(existing.is_none());
        }
        if let Err(e) = fs::rename(&tmp, &target) {
            let _ = fs::remove_file(&tmp);
            return Err(io_err(&target)(e));
        }
        let meta = serde_json::to_vec(&Meta { content_type: content_type.to_string() }).expect("meta json");
        let meta_path = self.meta_path(path);
        let meta_tmp = dir.join(format!("{TMP_PREFIX}{META_PREFIX}{}.{}", path.name(), uuid::Uuid::new_v4().simple()));
        fs::write(&meta_tmp, meta)
            .and_then(|_| fs::rename(&meta_tmp, &meta_path))
            .map_err(io_err(&meta_path))?;
        Ok(existing.is_none())
    }

    /// Removes a document or an empty container.
    pub fn remove(&self, path: &ResourcePath) -> Result<(), StorageError> {
        let parent = path.parent().ok_or(StorageError::Conflict {
            path: path.to_string(),
            reason: "the root container cannot be removed",
        })?;
        let _guards = self.lock(&[&parent, path]);
        let target = self.fs_path(path);
        match self.kind(path) {
            None => Err(StorageError::NotFound(path.to_string())),
            Some(ResourceKind::Container) => {
                let has_members = fs::read_dir(&target)
                    .map_err(io_err(&target))?
                    .filter_map(Result::ok)
                    .any(|e| !e.file_name().to_string_lossy().starts_with('.'));
                if has_members {
                    return Err(StorageError::Conflict { path: path.to_string(), reason: "container is not empty" });
                }
                fs::remove_dir_all(&target).map_err(io_err(&target))
            }
            Some(ResourceKind::Document) => {
                fs::remove_file(&target).map_err(io_err(&target))?;
                let _ = fs::remove_file(self.meta_path(path));
                Ok(())
            }
        }
    }
}
