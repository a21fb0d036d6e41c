//! Content-addressed record/replay cache: one JSON file per [`CacheKey`].

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::GatewayError;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CacheKey(String);

impl CacheKey {
    pub fn new(content_hash: &str, model_id: &str, temperature: f64) -> Self {
        // -0.0 and 0.0 are the same request.
        let t = if temperature == 0.0 { 0.0f64 } else { temperature };
        let mut h = Sha256::new();
        h.update(content_hash.as_bytes());
        h.update([0]);
        h.update(model_id.as_bytes());
        h.update([0]);
        h.update(t.to_bits().to_be_bytes());
        Self(hex::encode(h.finalize()))
    }

    /// A key previously obtained from [`CacheKey::as_str`].
    pub fn from_hex(s: &str) -> Option<Self> {
        (s.len() == 64 && s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))).then(|| Self(s.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for CacheKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: CacheKey,
    pub content_hash: String,
    pub model_id: String,
    pub temperature: f64,
    pub provider_echo: String,
    /// Verbatim response text.
    pub text: String,
}

#[derive(Debug)]
pub struct ResponseCache {
    dir: PathBuf,
    locks: Mutex<HashMap<CacheKey, Arc<Mutex<()>>>>,
}

impl ResponseCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, GatewayError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| cache_err(&dir, e))?;
        Ok(Self { dir, locks: Mutex::new(HashMap::new()) })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, key: &CacheKey) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    /// Per-key lock; holding it across lookup and fill makes concurrent
    /// requests for one key reach the provider once.
    pub fn lock(&self, key: &CacheKey) -> Arc<Mutex<()>> {
        let mut locks = self.locks.lock().unwrap_or_else(|p| p.into_inner());
        locks.entry(key.clone()).or_default().clone()
    }

    pub fn get(&self, key: &CacheKey) -> Result<Option<CacheEntry>, GatewayError> {
        let path = self.path(key);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(cache_err(&path, e)),
        };
        let entry: CacheEntry = serde_json::from_str(&text).map_err(|e| cache_err(&path, e))?;
        if &entry.key != key {
            return Err(cache_err(&path, "entry key does not match its file name"));
        }
        Ok(Some(entry))
    }

    pub fn put(&self, entry: &CacheEntry) -> Result<(), GatewayError> {
        let path = self.path(&entry.key);
        let tmp = path.with_extension("json.tmp");
        let body = serde_json::to_string_pretty(entry).expect("cache entry serializes");
        let write = || -> std::io::Result<()> {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(body.as_bytes())?;
            f.sync_all()?;
            fs::rename(&tmp, &path)
        };
        write().map_err(|e| cache_err(&path, e))
    }

    pub fn len(&self) -> usize {
        fs::read_dir(&self.dir)
            .map(|rd| rd.flatten().filter(|e| e.path().extension().is_some_and(|x| x == "json")).count())
            .unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn cache_err(path: &Path, e: impl std::fmt::Display) -> GatewayError {
    GatewayError::Cache { path: path.to_path_buf(), message: e.to_string() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_depend_on_every_input() {
        let k = CacheKey::new("abc", "m", 0.1);
        assert_eq!(k, CacheKey::new("abc", "m", 0.1));
        assert_ne!(k, CacheKey::new("abd", "m", 0.1));
        assert_ne!(k, CacheKey::new("abc", "n", 0.1));
        assert_ne!(k, CacheKey::new("abc", "m", 0.2));
        assert_eq!(CacheKey::new("abc", "m", 0.0), CacheKey::new("abc", "m", -0.0));
        assert_eq!(k.as_str().len(), 64);
    }

    #[test]
    fn put_get_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::open(dir.path().join("cache")).unwrap();
        let key = CacheKey::new("h", "m", 0.1);
        assert_eq!(cache.get(&key).unwrap(), None);
        let entry = CacheEntry {
            key: key.clone(),
            content_hash: "h".into(),
            model_id: "m".into(),
            temperature: 0.1,
            provider_echo: "m".into(),
            text: "  verbatim\n".into(),
        };
        cache.put(&entry).unwrap();
        assert_eq!(cache.get(&key).unwrap(), Some(entry));
        assert_eq!(cache.len(), 1);
        fs::write(cache.path(&key), "{trunc").unwrap();
        let err = cache.get(&key).unwrap_err();
        assert!(err.to_string().contains(key.as_str()));
    }
}
