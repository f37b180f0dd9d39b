//! Content-addressed vector cache.
//!
//! Keys are SHA-256 over `(capability, checkpoint id, normalized text)`.
//! Each entry lives in `<dir>/<k[0..2]>/<k>.bin` in the vector format of
//! [`crate::binfmt`]. Writes go through a temporary file and a rename, so
//! readers never see a partial entry and concurrent writers of the same key
//! leave identical bytes.

use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use sha2::{Digest, Sha256};

use crate::binfmt;
use crate::error::{Error, Result};

pub fn cache_key(capability: &str, checkpoint_id: &str, normalized_text: &str) -> String {
    let mut h = Sha256::new();
    for part in [capability, checkpoint_id, normalized_text] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Default)]
pub struct VectorCache {
    dir: Option<PathBuf>,
    memory: RwLock<HashMap<String, Arc<Vec<f32>>>>,
}

impl VectorCache {
    /// Memory-only cache.
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn on_disk(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(VectorCache {
            dir: Some(dir),
            memory: RwLock::default(),
        })
    }

    fn path_for(&self, key: &str) -> Option<PathBuf> {
        self.dir
            .as_ref()
            .map(|d| d.join(&key[..2]).join(format!("{key}.bin")))
    }

    pub fn get(&self, key: &str) -> Option<Arc<Vec<f32>>> {
        if let Some(v) = self.memory.read().expect("cache lock").get(key) {
            return Some(Arc::clone(v));
        }
        let path = self.path_for(key)?;
        let bytes = fs::read(&path).ok()?;
        let v = Arc::new(binfmt::decode_vector(&bytes)?);
        self.memory
            .write()
            .expect("cache lock")
            .insert(key.to_string(), Arc::clone(&v));
        Some(v)
    }

    pub fn put(&self, key: &str, vector: Vec<f32>) -> Result<Arc<Vec<f32>>> {
        if let Some(path) = self.path_for(key) {
            let parent = path.parent().expect("entry has a parent");
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            let tmp = parent.join(format!(
                ".{key}.{}.{:?}.tmp",
                std::process::id(),
                std::thread::current().id()
            ));
            fs::write(&tmp, binfmt::encode_vector(&vector)).map_err(|e| Error::io(&tmp, e))?;
            fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        }
        let v = Arc::new(vector);
        self.memory
            .write()
            .expect("cache lock")
            .insert(key.to_string(), Arc::clone(&v));
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_changes_with_each_component() {
        let base = cache_key("embed", "base", "text");
        assert_ne!(base, cache_key("generate", "base", "text"));
        assert_ne!(base, cache_key("embed", "step_10000", "text"));
        assert_ne!(base, cache_key("embed", "base", "text2"));
        // length prefixes keep component boundaries unambiguous
        assert_ne!(cache_key("ab", "c", "d"), cache_key("a", "bc", "d"));
        assert_eq!(base, cache_key("embed", "base", "text"));
    }

    #[test]
    fn disk_entries_survive_a_new_cache_instance() {
        let dir = tempfile::tempdir().unwrap();
        let key = cache_key("embed", "base", "hello");
        {
            let c = VectorCache::on_disk(dir.path()).unwrap();
            c.put(&key, vec![0.6, 0.8]).unwrap();
        }
        let c = VectorCache::on_disk(dir.path()).unwrap();
        let v = c.get(&key).unwrap();
        assert_eq!(v.as_slice(), &[0.6f32, 0.8]);
        assert!(c.get(&cache_key("embed", "base", "other")).is_none());
    }
}
