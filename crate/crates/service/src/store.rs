use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Document kinds, one subdirectory each.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Instance,
    Solution,
    Scenario,
    Trace,
}

impl Kind {
    fn dir(self) -> &'static str {
        match self {
            Kind::Instance => "instances",
            Kind::Solution => "solutions",
            Kind::Scenario => "scenarios",
            Kind::Trace => "traces",
        }
    }

    fn extension(self) -> &'static str {
        match self {
            Kind::Trace => "ndjson",
            _ => "json",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("no {kind} document `{id}`")]
    NotFound { kind: &'static str, id: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Directory of immutable documents named by the SHA-256 of their bytes.
#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 128 && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        for kind in [Kind::Instance, Kind::Solution, Kind::Scenario, Kind::Trace] {
            fs::create_dir_all(root.join(kind.dir()))?;
        }
        Ok(Store { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn path(&self, kind: Kind, id: &str) -> PathBuf {
        self.root.join(kind.dir()).join(format!("{id}.{}", kind.extension()))
    }

    /// Store `bytes` under their content hash and return the hash.
    pub fn put_bytes(&self, kind: Kind, bytes: &[u8]) -> Result<String, StoreError> {
        let id = format!("{:x}", Sha256::digest(bytes));
        self.put_named(kind, &id, bytes)?;
        Ok(id)
    }

    /// Store `bytes` under a caller-chosen id. Existing documents are kept.
    pub fn put_named(&self, kind: Kind, id: &str, bytes: &[u8]) -> Result<(), StoreError> {
        assert!(valid_id(id), "invalid document id");
        let path = self.path(kind, id);
        if path.exists() {
            return Ok(());
        }
        let tmp = path.with_extension(format!("tmp-{}", std::process::id()));
        let mut file = fs::File::create(&tmp)?;
        file.write_all(bytes)?;
        file.sync_all()?;
        fs::rename(&tmp, &path)?;
        Ok(())
    }

    pub fn put_json<T: Serialize>(&self, kind: Kind, value: &T) -> Result<String, StoreError> {
        self.put_bytes(kind, &serde_json::to_vec_pretty(value)?)
    }

    pub fn get_bytes(&self, kind: Kind, id: &str) -> Result<Vec<u8>, StoreError> {
        let not_found = || StoreError::NotFound { kind: kind.dir(), id: id.to_string() };
        if !valid_id(id) {
            return Err(not_found());
        }
        fs::read(self.path(kind, id)).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => not_found(),
            _ => e.into(),
        })
    }

    pub fn get_json<T: DeserializeOwned>(&self, kind: Kind, id: &str) -> Result<T, StoreError> {
        Ok(serde_json::from_slice(&self.get_bytes(kind, id)?)?)
    }

    /// Sorted ids of every document of `kind`.
    pub fn list(&self, kind: Kind) -> Result<Vec<String>, StoreError> {
        let mut ids = Vec::new();
        for entry in fs::read_dir(self.root.join(kind.dir()))? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) == Some(kind.extension()) {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    ids.push(stem.to_string());
                }
            }
        }
        ids.sort();
        Ok(ids)
    }
}
