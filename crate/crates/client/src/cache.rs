use crate::config::SamplingParams;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::{Path, PathBuf};
use toolpref_core::Message;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheKey(String);

impl CacheKey {
    /// SHA-256 over the model id, messages, sampling parameters and sample index.
    pub fn new(model_id: &str, messages: &[Message], sampling: &SamplingParams, sample_index: u32) -> Self {
        let payload = serde_json::json!({
            "model_id": model_id,
            "messages": messages,
            "sampling": sampling,
            "sample_index": sample_index,
        });
        let digest = Sha256::digest(payload.to_string().as_bytes());
        Self(hex::encode(digest))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CachedResponse {
    pub model_id: String,
    pub content: String,
    #[serde(default)]
    pub output_tokens: Option<u64>,
}

/// Append-only directory of response files named by key.
#[derive(Debug, Clone)]
pub struct ResponseCache {
    root: PathBuf,
}

impl ResponseCache {
    pub fn open(root: impl Into<PathBuf>) -> std::io::Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root)?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn path(&self, key: &CacheKey) -> PathBuf {
        self.root.join(&key.0[..2]).join(format!("{}.json", key.0))
    }

    /// Unreadable or corrupt entries are treated as misses.
    pub fn get(&self, key: &CacheKey) -> Option<CachedResponse> {
        let bytes = std::fs::read(self.path(key)).ok()?;
        serde_json::from_slice(&bytes).ok()
    }

    /// Writes through a temporary file and an atomic rename. Existing entries win.
    pub fn put(&self, key: &CacheKey, response: &CachedResponse) -> std::io::Result<()> {
        let path = self.path(key);
        if path.exists() {
            return Ok(());
        }
        let dir = path.parent().expect("cache entries live in a shard directory");
        std::fs::create_dir_all(dir)?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        tmp.write_all(&serde_json::to_vec(response).map_err(std::io::Error::other)?)?;
        tmp.persist(&path).map_err(|e| e.error)?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        walk(&self.root)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn walk(dir: &Path) -> usize {
    let Ok(entries) = std::fs::read_dir(dir) else {
        return 0;
    };
    entries
        .flatten()
        .map(|e| {
            let p = e.path();
            if p.is_dir() {
                walk(&p)
            } else {
                usize::from(p.extension().is_some_and(|x| x == "json"))
            }
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_are_stable_and_sensitive() {
        let m = [Message::user("hi")];
        let s = SamplingParams::default();
        let k = CacheKey::new("a", &m, &s, 0);
        assert_eq!(k, CacheKey::new("a", &m, &s, 0));
        assert_eq!(k.as_str().len(), 64);
        assert_ne!(k, CacheKey::new("a", &m, &s, 1));
        assert_ne!(k, CacheKey::new("b", &m, &s, 0));
        assert_ne!(k, CacheKey::new("a", &[Message::user("ho")], &s, 0));
        let hot = SamplingParams {
            temperature: 0.5,
            ..SamplingParams::default()
        };
        assert_ne!(k, CacheKey::new("a", &m, &hot, 0));
    }

    #[test]
    fn round_trip_and_append_only() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::open(dir.path()).unwrap();
        let key = CacheKey::new("a", &[], &SamplingParams::default(), 0);
        assert!(cache.get(&key).is_none());
        let first = CachedResponse {
            model_id: "a".into(),
            content: "x".into(),
            output_tokens: Some(1),
        };
        cache.put(&key, &first).unwrap();
        cache
            .put(
                &key,
                &CachedResponse {
                    content: "y".into(),
                    ..first.clone()
                },
            )
            .unwrap();
        assert_eq!(cache.get(&key), Some(first));
        assert_eq!(cache.len(), 1);
    }
}
