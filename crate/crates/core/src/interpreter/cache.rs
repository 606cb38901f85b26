use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};

use super::{content_hash, ProviderError};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CacheKey {
    pub provider: String,
    pub dimension: usize,
    pub content: String,
}

impl CacheKey {
    pub fn new(provider: &str, dimension: usize, text: &str) -> Self {
        Self {
            provider: provider.to_string(),
            dimension,
            content: content_hash(text),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Line {
    #[serde(flatten)]
    key: CacheKey,
    vector: Vec<f64>,
}

/// Embedding cache keyed by (provider, dimension, content hash).
///
/// When backed by a file, every new entry is appended as one JSON line. A torn
/// trailing line from a crash is skipped on open.
#[derive(Debug, Default)]
pub struct EmbeddingCache {
    entries: RwLock<HashMap<CacheKey, Vec<f64>>>,
    file: Option<Mutex<File>>,
    path: Option<PathBuf>,
}

impl EmbeddingCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self, ProviderError> {
        let path = path.as_ref();
        let mut entries = HashMap::new();
        let existing = match std::fs::read_to_string(path) {
            Ok(text) => text,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(ProviderError::Cache(e.to_string())),
        };
        for line in existing.lines() {
            if let Ok(parsed) = serde_json::from_str::<Line>(line) {
                entries.insert(parsed.key, parsed.vector);
            }
        }
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| ProviderError::Cache(e.to_string()))?;
        if !existing.is_empty() && !existing.ends_with('\n') {
            // terminate a torn line so the next append starts clean
            file.write_all(b"\n").map_err(|e| ProviderError::Cache(e.to_string()))?;
        }
        Ok(Self {
            entries: RwLock::new(entries),
            file: Some(Mutex::new(file)),
            path: Some(path.to_path_buf()),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key: &CacheKey) -> Option<Vec<f64>> {
        self.entries.read().unwrap().get(key).cloned()
    }

    pub fn insert(&self, key: CacheKey, vector: Vec<f64>) -> Result<(), ProviderError> {
        let mut entries = self.entries.write().unwrap();
        if entries.contains_key(&key) {
            return Ok(());
        }
        if let Some(file) = &self.file {
            let mut line = serde_json::to_string(&Line {
                key: key.clone(),
                vector: vector.clone(),
            })
            .map_err(|e| ProviderError::Cache(e.to_string()))?;
            line.push('\n');
            file.lock()
                .unwrap()
                .write_all(line.as_bytes())
                .map_err(|e| ProviderError::Cache(e.to_string()))?;
        }
        entries.insert(key, vector);
        Ok(())
    }
}
