//! On-disk assessment cache: one JSON file per key, named by the lowercase
//! hex SHA-256 of the key tuple.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::model::Assessment;

#[derive(Debug, Clone)]
pub struct AssessmentCache {
    dir: PathBuf,
}

/// Hash of (model id, prompt version, project id, cleaned description).
/// Fields are length-prefixed so no two tuples share an encoding.
pub fn cache_key(model_id: &str, prompt_version: &str, project_id: &str, description: &str) -> String {
    let mut hasher = Sha256::new();
    for field in [model_id, prompt_version, project_id, description] {
        hasher.update((field.len() as u64).to_le_bytes());
        hasher.update(field.as_bytes());
    }
    hex::encode(hasher.finalize())
}

impl AssessmentCache {
    pub fn open(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(AssessmentCache { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(key)
    }

    /// A missing or unreadable entry is a miss.
    pub fn get(&self, key: &str) -> Option<Assessment> {
        let bytes = fs::read(self.path_for(key)).ok()?;
        match serde_json::from_slice(&bytes) {
            Ok(a) => Some(a),
            Err(e) => {
                log::warn!("ignoring corrupt cache entry {key}: {e}");
                None
            }
        }
    }

    /// Writes through a temporary file and renames it into place, so
    /// concurrent writers of the same key never expose a partial file.
    pub fn put(&self, key: &str, assessment: &Assessment) -> std::io::Result<()> {
        let tmp = self.dir.join(format!(".{key}.{}.tmp", unique_suffix()));
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&serde_json::to_vec(assessment)?)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, self.path_for(key))
    }
}

fn unique_suffix() -> String {
    use std::sync::atomic::{AtomicU64, Ordering};
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    format!("{}-{}", std::process::id(), COUNTER.fetch_add(1, Ordering::Relaxed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Provenance;
    use chrono::{DateTime, Utc};

    fn sample() -> Assessment {
        Assessment {
            project_id: "p".into(),
            contributions: vec![],
            model_id: "m".into(),
            prompt_version: "v".into(),
            created_at: DateTime::<Utc>::UNIX_EPOCH,
            provenance: Provenance::Mock,
        }
    }

    #[test]
    fn key_shape() {
        let k = cache_key("m", "v", "p", "d");
        assert_eq!(k.len(), 64);
        assert!(k.chars().all(|c| c.is_ascii_hexdigit() && !c.is_ascii_uppercase()));
        assert_ne!(k, cache_key("m", "v2", "p", "d"));
        assert_ne!(cache_key("ab", "c", "p", "d"), cache_key("a", "bc", "p", "d"));
    }

    #[test]
    fn put_get() {
        let dir = tempfile::tempdir().unwrap();
        let cache = AssessmentCache::open(dir.path().join("cache")).unwrap();
        let key = cache_key("m", "v", "p", "d");
        assert!(cache.get(&key).is_none());
        cache.put(&key, &sample()).unwrap();
        assert_eq!(cache.get(&key), Some(sample()));
        assert!(cache.path_for(&key).file_name().unwrap().to_str().unwrap() == key);
        fs::write(cache.path_for(&key), b"{oops").unwrap();
        assert!(cache.get(&key).is_none());
    }
}
