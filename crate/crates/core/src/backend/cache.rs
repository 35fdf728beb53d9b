//! Persistent fill cache.
//!
//! Entries live at `<dir>/<first two hex digits>/<sha256 hex>.json` and hold
//! the serialized fill list. Writes go through a temp file and a rename, so
//! readers never observe half-written entries.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use sha2::{Digest, Sha256};

use super::{check_fills, BackendError, ClozeBackend, ClozeFill, ClozeRequest};

const KEY_VERSION: &str = "cloze-fill-cache/1";

/// 256-bit content hash of everything that can influence a fill.
pub fn cache_key(request: &ClozeRequest, backend_identity: &str) -> String {
    fn put(h: &mut Sha256, bytes: &[u8]) {
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(bytes);
    }
    let mut h = Sha256::new();
    put(&mut h, KEY_VERSION.as_bytes());
    put(&mut h, backend_identity.as_bytes());
    put(&mut h, request.document.as_bytes());
    put(&mut h, request.masked.text.as_bytes());
    put(&mut h, request.masked.sentinel.as_bytes());
    h.update((request.masked.slots.len() as u64).to_le_bytes());
    for slot in &request.masked.slots {
        h.update((slot.factor_index as u64).to_le_bytes());
        // surfaces matter to oracles that compare against them
        put(&mut h, slot.surface.as_bytes());
    }
    match &request.reference {
        None => h.update([0u8]),
        Some(refs) => {
            h.update([1u8]);
            h.update((refs.len() as u64).to_le_bytes());
            for r in refs {
                put(&mut h, r.as_bytes());
            }
        }
    }
    hex::encode(h.finalize())
}

#[derive(Debug)]
pub struct FillCache {
    dir: PathBuf,
    write_lock: Mutex<()>,
    hits: AtomicU64,
    misses: AtomicU64,
    corrupt: AtomicU64,
}

impl FillCache {
    pub fn open(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            write_lock: Mutex::new(()),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
            corrupt: AtomicU64::new(0),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(&key[..2]).join(format!("{key}.json"))
    }

    /// Looks up an entry. Unreadable or invalid entries are evicted and
    /// reported as a miss.
    pub fn get(&self, key: &str, request: &ClozeRequest) -> Option<Vec<ClozeFill>> {
        let path = self.path_for(key);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                self.misses.fetch_add(1, Ordering::Relaxed);
                return None;
            }
            Err(e) => {
                self.evict(&path, &e.to_string());
                return None;
            }
        };
        let parsed = serde_json::from_slice::<Vec<ClozeFill>>(&bytes)
            .map_err(|e| e.to_string())
            .and_then(|fills| check_fills(request, &fills).map(|_| fills).map_err(|e| e.to_string()));
        match parsed {
            Ok(fills) => {
                self.hits.fetch_add(1, Ordering::Relaxed);
                Some(fills)
            }
            Err(reason) => {
                self.evict(&path, &reason);
                None
            }
        }
    }

    fn evict(&self, path: &Path, reason: &str) {
        log::warn!("evicting corrupt cache entry {}: {reason}", path.display());
        self.corrupt.fetch_add(1, Ordering::Relaxed);
        self.misses.fetch_add(1, Ordering::Relaxed);
        let _guard = self.write_lock.lock().unwrap_or_else(|e| e.into_inner());
        let _ = fs::remove_file(path);
    }

    pub fn put(&self, key: &str, fills: &[ClozeFill]) -> io::Result<()> {
        let path = self.path_for(key);
        let body = serde_json::to_vec(fills).map_err(io::Error::other)?;
        let _guard = self.write_lock.lock().unwrap_or_else(|e| e.into_inner());
        let parent = path.parent().expect("entry path has a parent");
        fs::create_dir_all(parent)?;
        let tmp = parent.join(format!(".{key}.tmp"));
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&body)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, &path)
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }

    /// Number of entries evicted because they could not be read back.
    pub fn corrupt_entries(&self) -> u64 {
        self.corrupt.load(Ordering::Relaxed)
    }
}

/// Wraps a backend with a [`FillCache`]; answers are identical to the
/// inner backend's.
pub struct CachedBackend<B> {
    inner: B,
    cache: FillCache,
    identity: String,
}

impl<B: ClozeBackend> CachedBackend<B> {
    pub fn new(inner: B, cache: FillCache) -> Self {
        let identity = inner.identity();
        Self { inner, cache, identity }
    }

    pub fn cache(&self) -> &FillCache {
        &self.cache
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }
}

impl<B: ClozeBackend> ClozeBackend for CachedBackend<B> {
    fn identity(&self) -> String {
        self.identity.clone()
    }

    fn fill(&self, request: &ClozeRequest) -> Result<Vec<ClozeFill>, BackendError> {
        request.validate()?;
        let key = cache_key(request, &self.identity);
        if let Some(fills) = self.cache.get(&key, request) {
            return Ok(fills);
        }
        let fills = self.inner.fill(request)?;
        if let Err(e) = self.cache.put(&key, &fills) {
            // a cache that cannot be written still answers correctly
            log::warn!("cannot write cache entry {key}: {e}");
        }
        Ok(fills)
    }

    fn needs_reference(&self) -> bool {
        self.inner.needs_reference()
    }
}
