//! On-disk response cache.
//!
//! Layout: `<root>/<k[0..2]>/<k[2..4]>/<key>.json` holds the metadata record,
//! `<key>.<body-hash>.body` holds the raw response body. The metadata file is
//! written last with an atomic rename, so it acts as the commit marker for an
//! entry; a reader never observes a half-written body.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use url::Url;

use crate::error::{Error, Result};
use crate::time::{Clock, SystemClock};

pub const DEFAULT_CACHE_DIR: &str = "data/cache";
pub const CACHE_DIR_ENV: &str = "LAUNCHPULSE_CACHE_DIR";

/// Hex SHA-256 of the canonical request string.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CacheKey(String);

impl CacheKey {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn parse(text: &str) -> Result<Self> {
        if text.len() == 64 && text.bytes().all(|b| b.is_ascii_hexdigit() && !b.is_ascii_uppercase()) {
            Ok(Self(text.to_string()))
        } else {
            Err(Error::invalid(format!("not a cache key: {text:?}")))
        }
    }
}

impl std::fmt::Display for CacheKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheEntry {
    pub key: CacheKey,
    pub body: Vec<u8>,
    pub status: u16,
    pub fetched_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ttl {
    Forever,
    For(Duration),
}

impl Ttl {
    /// Star-event pages describe immutable history.
    pub const STAR_PAGES: Ttl = Ttl::Forever;
    pub const METADATA: Ttl = Ttl::For(Duration::hours(24));
    pub const SEARCH: Ttl = Ttl::For(Duration::hours(24));

    fn expired(&self, fetched_at: DateTime<Utc>, now: DateTime<Utc>) -> bool {
        match self {
            Ttl::Forever => false,
            Ttl::For(ttl) => now - fetched_at >= *ttl,
        }
    }
}

/// Canonical form of a request: upper-cased method, scheme/host/path of the
/// URL, and every query parameter (from the URL and from `params`) sorted by
/// name then value.
pub fn canonical_request(method: &str, url: &str, params: &[(String, String)]) -> Result<String> {
    let mut parsed = Url::parse(url).map_err(|e| Error::InvalidUrl {
        url: url.to_string(),
        reason: e.to_string(),
    })?;
    if !matches!(parsed.scheme(), "http" | "https") || parsed.host_str().is_none() {
        return Err(Error::InvalidUrl {
            url: url.to_string(),
            reason: "expected an absolute http(s) url".into(),
        });
    }
    let mut pairs: Vec<(String, String)> = parsed
        .query_pairs()
        .map(|(k, v)| (k.into_owned(), v.into_owned()))
        .chain(params.iter().cloned())
        .collect();
    pairs.sort();
    parsed.set_fragment(None);
    if pairs.is_empty() {
        parsed.set_query(None);
    } else {
        parsed.query_pairs_mut().clear().extend_pairs(pairs.iter());
    }
    Ok(format!("{} {}", method.to_ascii_uppercase(), parsed))
}

pub fn cache_key(method: &str, url: &str, params: &[(String, String)]) -> Result<CacheKey> {
    let canonical = canonical_request(method, url, params)?;
    Ok(key_of_canonical(&canonical))
}

pub fn key_of_canonical(canonical: &str) -> CacheKey {
    CacheKey(hex::encode(Sha256::digest(canonical.as_bytes())))
}

#[derive(Debug, Serialize, Deserialize)]
struct EntryMeta {
    key: String,
    status: u16,
    #[serde(with = "crate::time::ts_format")]
    fetched_at: DateTime<Utc>,
    body_file: String,
    body_len: u64,
    body_sha256: String,
}

pub struct CacheStore {
    root: PathBuf,
    clock: Arc<dyn Clock>,
}

impl std::fmt::Debug for CacheStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CacheStore").field("root", &self.root).finish()
    }
}

impl CacheStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        Self::with_clock(root, Arc::new(SystemClock))
    }

    pub fn with_clock(root: impl Into<PathBuf>, clock: Arc<dyn Clock>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(Self { root, clock })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn shard_dir(&self, key: &CacheKey) -> PathBuf {
        let k = key.as_str();
        self.root.join(&k[0..2]).join(&k[2..4])
    }

    fn meta_path(&self, key: &CacheKey) -> PathBuf {
        self.shard_dir(key).join(format!("{key}.json"))
    }

    /// Returns the entry stored under `key` unless it is absent, expired under
    /// `ttl`, or corrupted (in which case it is evicted with a warning).
    pub fn get(&self, key: &CacheKey, ttl: Ttl) -> Option<CacheEntry> {
        let meta_path = self.meta_path(key);
        let raw = match fs::read(&meta_path) {
            Ok(raw) => raw,
            Err(_) => return None,
        };
        let meta: EntryMeta = match serde_json::from_slice(&raw) {
            Ok(meta) => meta,
            Err(e) => {
                log::warn!("evicting corrupt cache record {}: {e}", meta_path.display());
                self.evict(key);
                return None;
            }
        };
        if meta.key != key.as_str() {
            log::warn!("evicting cache record {} with mismatched key", meta_path.display());
            self.evict(key);
            return None;
        }
        let body_path = self.shard_dir(key).join(&meta.body_file);
        let body = match fs::read(&body_path) {
            Ok(body) => body,
            Err(e) => {
                // A concurrent writer may have replaced the entry between reads.
                log::warn!("cache body {} unreadable: {e}", body_path.display());
                return None;
            }
        };
        if body.len() as u64 != meta.body_len || hex::encode(Sha256::digest(&body)) != meta.body_sha256 {
            log::warn!("evicting cache entry {key}: body does not match its checksum");
            self.evict(key);
            return None;
        }
        if ttl.expired(meta.fetched_at, self.clock.now()) {
            return None;
        }
        Some(CacheEntry {
            key: key.clone(),
            body,
            status: meta.status,
            fetched_at: meta.fetched_at,
        })
    }

    pub fn put(&self, entry: &CacheEntry) -> Result<()> {
        let now = self.clock.now();
        let fetched_at = entry.fetched_at.min(now);
        let dir = self.shard_dir(&entry.key);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;

        let digest = hex::encode(Sha256::digest(&entry.body));
        let body_file = format!("{}.{}.body", entry.key, &digest[..16]);
        write_atomic(&dir.join(&body_file), &entry.body)?;

        let meta = EntryMeta {
            key: entry.key.to_string(),
            status: entry.status,
            fetched_at,
            body_file: body_file.clone(),
            body_len: entry.body.len() as u64,
            body_sha256: digest,
        };
        let meta_bytes = serde_json::to_vec(&meta).expect("metadata serializes");
        write_atomic(&self.meta_path(&entry.key), &meta_bytes)?;
        self.remove_stale_bodies(&entry.key, &body_file);
        Ok(())
    }

    fn remove_stale_bodies(&self, key: &CacheKey, keep: &str) {
        let prefix = format!("{key}.");
        let Ok(listing) = fs::read_dir(self.shard_dir(key)) else {
            return;
        };
        for item in listing.flatten() {
            let name = item.file_name();
            let name = name.to_string_lossy();
            if name.starts_with(&prefix) && name.ends_with(".body") && name != keep {
                let _ = fs::remove_file(item.path());
            }
        }
    }

    fn evict(&self, key: &CacheKey) {
        let _ = fs::remove_file(self.meta_path(key));
        self.remove_stale_bodies(key, "");
    }
}

/// Writes `bytes` to a temporary sibling of `path` then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::SimClock;
    use chrono::TimeZone;
    use proptest::prelude::*;

    fn p(k: &str, v: &str) -> (String, String) {
        (k.to_string(), v.to_string())
    }

    fn entry(key: &CacheKey, body: &[u8], at: DateTime<Utc>) -> CacheEntry {
        CacheEntry {
            key: key.clone(),
            body: body.to_vec(),
            status: 200,
            fetched_at: at,
        }
    }

    fn sim_store(dir: &Path) -> (CacheStore, Arc<SimClock>) {
        let clock = Arc::new(SimClock::new(Utc.with_ymd_and_hms(2024, 6, 1, 0, 0, 0).unwrap()));
        (CacheStore::with_clock(dir, clock.clone()).unwrap(), clock)
    }

    #[test]
    fn key_ignores_param_order() {
        let a = cache_key("GET", "https://x/api", &[p("b", "2"), p("a", "1")]).unwrap();
        let b = cache_key("GET", "https://x/api", &[p("a", "1"), p("b", "2")]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn key_without_params_is_nonempty() {
        let k = cache_key("GET", "https://x/api", &[]).unwrap();
        assert_eq!(k.as_str().len(), 64);
    }

    #[test]
    fn key_is_value_sensitive() {
        let a = cache_key("GET", "https://x/api", &[p("a", "1")]).unwrap();
        let b = cache_key("GET", "https://x/api", &[p("a", "2")]).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn url_query_and_params_merge() {
        let a = canonical_request("get", "https://x/api?b=2", &[p("a", "1")]).unwrap();
        assert_eq!(a, "GET https://x/api?a=1&b=2");
    }

    #[test]
    fn malformed_url_is_rejected() {
        assert!(matches!(
            cache_key("GET", "not a url", &[]),
            Err(Error::InvalidUrl { .. })
        ));
        assert!(cache_key("GET", "/relative/path", &[]).is_err());
        assert!(cache_key("GET", "ftp://x/y", &[]).is_err());
    }

    #[test]
    fn round_trip_and_miss() {
        let dir = tempfile::tempdir().unwrap();
        let (store, clock) = sim_store(dir.path());
        let key = cache_key("GET", "https://x/api", &[]).unwrap();
        assert!(store.get(&key, Ttl::Forever).is_none());
        let e = entry(&key, b"{\"ok\":true}", clock.now());
        store.put(&e).unwrap();
        assert_eq!(store.get(&key, Ttl::Forever), Some(e));
    }

    #[test]
    fn last_write_wins() {
        let dir = tempfile::tempdir().unwrap();
        let (store, clock) = sim_store(dir.path());
        let key = cache_key("GET", "https://x/api", &[]).unwrap();
        store.put(&entry(&key, b"v1", clock.now())).unwrap();
        store.put(&entry(&key, b"v2", clock.now())).unwrap();
        assert_eq!(store.get(&key, Ttl::Forever).unwrap().body, b"v2");
        let shard = store.shard_dir(&key);
        let bodies = fs::read_dir(shard)
            .unwrap()
            .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().ends_with(".body"));
        assert_eq!(bodies.count(), 1);
    }

    #[test]
    fn empty_body_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let (store, clock) = sim_store(dir.path());
        let key = cache_key("GET", "https://x/empty", &[]).unwrap();
        store.put(&entry(&key, b"", clock.now())).unwrap();
        assert_eq!(store.get(&key, Ttl::Forever).unwrap().body.len(), 0);
    }

    #[test]
    fn ttl_expiry() {
        let dir = tempfile::tempdir().unwrap();
        let (store, clock) = sim_store(dir.path());
        let key = cache_key("GET", "https://x/api", &[]).unwrap();
        store.put(&entry(&key, b"v", clock.now())).unwrap();
        assert!(store.get(&key, Ttl::For(Duration::zero())).is_none());
        assert!(store.get(&key, Ttl::METADATA).is_some());
        clock.advance(std::time::Duration::from_secs(24 * 3600));
        assert!(store.get(&key, Ttl::METADATA).is_none());
        assert!(store.get(&key, Ttl::STAR_PAGES).is_some());
    }

    #[test]
    fn future_fetch_time_is_clamped() {
        let dir = tempfile::tempdir().unwrap();
        let (store, clock) = sim_store(dir.path());
        let key = cache_key("GET", "https://x/api", &[]).unwrap();
        let future = clock.now() + Duration::days(3);
        store.put(&entry(&key, b"v", future)).unwrap();
        assert_eq!(store.get(&key, Ttl::Forever).unwrap().fetched_at, clock.now());
    }

    #[test]
    fn corrupt_entries_are_evicted() {
        let dir = tempfile::tempdir().unwrap();
        let (store, clock) = sim_store(dir.path());
        let key = cache_key("GET", "https://x/api", &[]).unwrap();
        store.put(&entry(&key, b"payload", clock.now())).unwrap();
        let body = fs::read_dir(store.shard_dir(&key))
            .unwrap()
            .map(|e| e.unwrap().path())
            .find(|p| p.extension().is_some_and(|x| x == "body"))
            .unwrap();
        fs::write(&body, b"tampered").unwrap();
        assert!(store.get(&key, Ttl::Forever).is_none());
        assert!(!store.meta_path(&key).exists());

        store.put(&entry(&key, b"payload", clock.now())).unwrap();
        fs::write(store.meta_path(&key), b"{not json").unwrap();
        assert!(store.get(&key, Ttl::Forever).is_none());
        assert!(!store.meta_path(&key).exists());
    }

    #[test]
    fn unwritable_root_names_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("occupied");
        fs::write(&file, b"x").unwrap();
        let err = CacheStore::open(file.join("cache")).unwrap_err();
        assert!(err.to_string().contains("occupied"), "{err}");
    }

    proptest! {
        #[test]
        fn key_is_permutation_invariant(
            params in proptest::collection::vec(("[a-z]{1,4}", "[a-z0-9 &=]{0,6}"), 0..8),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled = params.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(
                cache_key("GET", "https://api.example.com/x", &params).unwrap(),
                cache_key("GET", "https://api.example.com/x", &shuffled).unwrap()
            );
        }

        #[test]
        fn put_get_round_trip(body in proptest::collection::vec(any::<u8>(), 0..512), status in 100u16..600) {
            let dir = tempfile::tempdir().unwrap();
            let (store, clock) = sim_store(dir.path());
            let key = cache_key("GET", "https://x/p", &[]).unwrap();
            let e = CacheEntry { key: key.clone(), body, status, fetched_at: clock.now() };
            store.put(&e).unwrap();
            prop_assert_eq!(store.get(&key, Ttl::Forever), Some(e));
        }
    }
}
