use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use sha2::{Digest, Sha256};

use super::{EmbeddingProvider, EmbeddingVector};
use crate::error::{Error, Result};

pub type CacheKey = [u8; 32];

/// Content-addressed vector store keyed by sha256(fingerprint, input).
///
/// Always holds an in-memory map; with a directory, entries are also written
/// to `<dir>/<k[0..2]>/<k>.bin` as little-endian f64.
#[derive(Debug)]
pub struct EmbeddingCache {
    dir: Option<PathBuf>,
    mem: Mutex<HashMap<CacheKey, Arc<EmbeddingVector>>>,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl EmbeddingCache {
    pub fn in_memory() -> Self {
        EmbeddingCache {
            dir: None,
            mem: Mutex::new(HashMap::new()),
            hits: AtomicUsize::new(0),
            misses: AtomicUsize::new(0),
        }
    }

    pub fn on_disk(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        Ok(EmbeddingCache {
            dir: Some(dir),
            ..Self::in_memory()
        })
    }

    pub fn key(fingerprint: &str, input: &str) -> CacheKey {
        Sha256::new()
            .chain_update(fingerprint.as_bytes())
            .chain_update([0u8])
            .chain_update(input.as_bytes())
            .finalize()
            .into()
    }

    fn path_for(&self, key: &CacheKey) -> Option<PathBuf> {
        let hex = hex::encode(key);
        self.dir
            .as_ref()
            .map(|d| d.join(&hex[..2]).join(format!("{hex}.bin")))
    }

    pub fn get(&self, key: &CacheKey) -> Result<Option<Arc<EmbeddingVector>>> {
        if let Some(v) = self.mem.lock().expect("cache lock").get(key) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(Some(Arc::clone(v)));
        }
        let Some(path) = self.path_for(key) else {
            self.misses.fetch_add(1, Ordering::Relaxed);
            return Ok(None);
        };
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                self.misses.fetch_add(1, Ordering::Relaxed);
                return Ok(None);
            }
            Err(e) => return Err(e.into()),
        };
        if bytes.is_empty() || bytes.len() % 8 != 0 {
            return Err(Error::Index(format!(
                "corrupt cache entry {}",
                path.display()
            )));
        }
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let v = Arc::new(EmbeddingVector::from_raw(values)?);
        self.mem.lock().expect("cache lock").insert(*key, Arc::clone(&v));
        self.hits.fetch_add(1, Ordering::Relaxed);
        Ok(Some(v))
    }

    pub fn put(&self, key: CacheKey, vector: EmbeddingVector) -> Result<Arc<EmbeddingVector>> {
        if let Some(path) = self.path_for(&key) {
            let parent = path.parent().expect("cache entry has a parent");
            fs::create_dir_all(parent)?;
            let bytes: Vec<u8> = vector.values().iter().flat_map(|v| v.to_le_bytes()).collect();
            let tmp = path.with_extension(format!("tmp{}", std::process::id()));
            fs::write(&tmp, bytes)?;
            fs::rename(&tmp, &path)?;
        }
        let v = Arc::new(vector);
        self.mem.lock().expect("cache lock").insert(key, Arc::clone(&v));
        Ok(v)
    }

    /// (hits, misses) since creation.
    pub fn stats(&self) -> (usize, usize) {
        (self.hits.load(Ordering::Relaxed), self.misses.load(Ordering::Relaxed))
    }
}

/// Serves repeated inputs from the cache and sends misses to the inner
/// provider in batches.
pub struct CachedProvider<P> {
    inner: P,
    cache: EmbeddingCache,
    batch_size: usize,
}

impl<P: EmbeddingProvider> CachedProvider<P> {
    pub fn new(inner: P, cache: EmbeddingCache, batch_size: usize) -> Self {
        CachedProvider {
            inner,
            cache,
            batch_size: batch_size.max(1),
        }
    }

    pub fn cache(&self) -> &EmbeddingCache {
        &self.cache
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }
}

impl<P: EmbeddingProvider> EmbeddingProvider for CachedProvider<P> {
    fn fingerprint(&self) -> String {
        self.inner.fingerprint()
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn embed_raw(&self, inputs: &[&str]) -> Result<Vec<EmbeddingVector>> {
        let fp = self.inner.fingerprint();
        let keys: Vec<CacheKey> = inputs.iter().map(|s| EmbeddingCache::key(&fp, s)).collect();
        let mut out: Vec<Option<Arc<EmbeddingVector>>> = Vec::with_capacity(inputs.len());
        // distinct missing inputs, first occurrence order
        let mut missing: Vec<usize> = Vec::new();
        let mut seen: HashMap<CacheKey, ()> = HashMap::new();
        for (i, key) in keys.iter().enumerate() {
            let hit = self.cache.get(key)?;
            if hit.is_none() && seen.insert(*key, ()).is_none() {
                missing.push(i);
            }
            out.push(hit);
        }
        for batch in missing.chunks(self.batch_size) {
            let texts: Vec<&str> = batch.iter().map(|&i| inputs[i]).collect();
            let vectors = self.inner.embed_raw(&texts)?;
            if vectors.len() != texts.len() {
                return Err(Error::Provider(format!(
                    "provider returned {} vectors for {} inputs",
                    vectors.len(),
                    texts.len()
                )));
            }
            for (&i, v) in batch.iter().zip(vectors) {
                self.cache.put(keys[i], v)?;
            }
        }
        keys.iter()
            .zip(out)
            .map(|(key, hit)| match hit {
                Some(v) => Ok((*v).clone()),
                None => self
                    .cache
                    .get(key)?
                    .map(|v| (*v).clone())
                    .ok_or_else(|| Error::Provider("cache lost an entry".into())),
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{embed_batch, HashingEmbedder};
    use std::sync::atomic::AtomicUsize;

    struct Counting {
        inner: HashingEmbedder,
        calls: AtomicUsize,
        texts: AtomicUsize,
    }

    impl EmbeddingProvider for Counting {
        fn fingerprint(&self) -> String {
            self.inner.fingerprint()
        }
        fn dim(&self) -> usize {
            self.inner.dim()
        }
        fn embed_raw(&self, inputs: &[&str]) -> Result<Vec<EmbeddingVector>> {
            self.calls.fetch_add(1, Ordering::Relaxed);
            self.texts.fetch_add(inputs.len(), Ordering::Relaxed);
            self.inner.embed_raw(inputs)
        }
    }

    fn counting() -> Counting {
        Counting {
            inner: HashingEmbedder::new(16, 3).unwrap(),
            calls: AtomicUsize::new(0),
            texts: AtomicUsize::new(0),
        }
    }

    #[test]
    fn repeated_inputs_hit_cache() {
        let p = CachedProvider::new(counting(), EmbeddingCache::in_memory(), 2);
        let a = embed_batch(&p, &["a b", "c", "a b", "d", "e"]).unwrap();
        assert_eq!(p.inner().texts.load(Ordering::Relaxed), 4);
        assert_eq!(p.inner().calls.load(Ordering::Relaxed), 2);
        assert_eq!(a[0], a[2]);
        let b = embed_batch(&p, &["e", "a b"]).unwrap();
        assert_eq!(p.inner().texts.load(Ordering::Relaxed), 4);
        assert_eq!(b[1], a[0]);
    }

    #[test]
    fn disk_cache_survives_restart() {
        let dir = tempfile::tempdir().unwrap();
        let first = CachedProvider::new(counting(), EmbeddingCache::on_disk(dir.path()).unwrap(), 8);
        let v1 = embed_batch(&first, &["Art. 69"]).unwrap();
        let second = CachedProvider::new(counting(), EmbeddingCache::on_disk(dir.path()).unwrap(), 8);
        let v2 = embed_batch(&second, &["Art. 69"]).unwrap();
        assert_eq!(second.inner().calls.load(Ordering::Relaxed), 0);
        assert_eq!(v1, v2);
    }

    #[test]
    fn key_depends_on_fingerprint() {
        assert_ne!(EmbeddingCache::key("a", "x"), EmbeddingCache::key("b", "x"));
        assert_ne!(EmbeddingCache::key("ab", "c"), EmbeddingCache::key("a", "bc"));
    }
}
