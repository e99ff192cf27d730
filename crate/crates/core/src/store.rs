//! Local content-addressed blob store for shared models and task outcomes.
//!
//! On-disk layout (`FsStore`):
//!
//! ```text
//! <root>/
//!   ab/abcdef...        blob whose SHA-256 is abcdef... (64 hex chars)
//!   .tmp/               in-flight writes, renamed into place when complete
//! ```
//!
//! The directory is the whole index: listing the fan-out directories
//! recovers every stored id.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::RwLock;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("content {0} not found")]
    NotFound(ContentId),

    #[error("stored bytes for {0} do not match their digest")]
    Corrupt(ContentId),

    #[error("invalid content id {0:?}")]
    InvalidId(String),

    #[error("storage failure: {0}")]
    StorageFailure(#[from] io::Error),
}

/// SHA-256 digest of a blob, rendered `cidv0-sha256:<64 lowercase hex>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ContentId([u8; 32]);

impl ContentId {
    pub const PREFIX: &'static str = "cidv0-sha256:";

    pub fn of(bytes: &[u8]) -> Self {
        ContentId(Sha256::digest(bytes).into())
    }

    pub fn digest(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Display for ContentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", Self::PREFIX, self.hex())
    }
}

impl FromStr for ContentId {
    type Err = StoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let invalid = || StoreError::InvalidId(s.to_string());
        let hex_part = s.strip_prefix(Self::PREFIX).ok_or_else(invalid)?;
        if hex_part.len() != 64 || hex_part.bytes().any(|b| b.is_ascii_uppercase()) {
            return Err(invalid());
        }
        let mut out = [0u8; 32];
        hex::decode_to_slice(hex_part, &mut out).map_err(|_| invalid())?;
        Ok(ContentId(out))
    }
}

impl Serialize for ContentId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ContentId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Result of a `put`, with the flags callers may want to surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PutReceipt {
    pub cid: ContentId,
    /// False when the blob was already present.
    pub created: bool,
    pub empty: bool,
}

pub trait BlobStore: Send + Sync {
    fn put_blob(&self, bytes: &[u8]) -> Result<PutReceipt, StoreError>;

    fn get(&self, cid: &ContentId) -> Result<Vec<u8>, StoreError>;

    fn contains(&self, cid: &ContentId) -> bool;

    fn put(&self, bytes: &[u8]) -> Result<ContentId, StoreError> {
        self.put_blob(bytes).map(|r| r.cid)
    }
}

/// Filesystem-backed store with two-character fan-out.
#[derive(Debug)]
pub struct FsStore {
    root: PathBuf,
    tmp_counter: AtomicU64,
}

impl FsStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(root.join(".tmp"))?;
        Ok(FsStore {
            root,
            tmp_counter: AtomicU64::new(0),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn blob_path(&self, cid: &ContentId) -> PathBuf {
        let hex = cid.hex();
        self.root.join(&hex[..2]).join(hex)
    }

    /// Every id present, recovered from the directory tree alone.
    pub fn list(&self) -> Result<Vec<ContentId>, StoreError> {
        let mut out = Vec::new();
        for fan in fs::read_dir(&self.root)? {
            let fan = fan?;
            let name = fan.file_name();
            let name = name.to_string_lossy();
            if name.len() != 2 || !fan.file_type()?.is_dir() {
                continue;
            }
            for entry in fs::read_dir(fan.path())? {
                let entry = entry?;
                let hex = entry.file_name().to_string_lossy().into_owned();
                if let Ok(cid) = format!("{}{hex}", ContentId::PREFIX).parse::<ContentId>() {
                    out.push(cid);
                }
            }
        }
        out.sort();
        Ok(out)
    }
}

impl BlobStore for FsStore {
    fn put_blob(&self, bytes: &[u8]) -> Result<PutReceipt, StoreError> {
        let cid = ContentId::of(bytes);
        let empty = bytes.is_empty();
        let path = self.blob_path(&cid);
        if path.exists() {
            return Ok(PutReceipt {
                cid,
                created: false,
                empty,
            });
        }
        fs::create_dir_all(path.parent().expect("blob path has a parent"))?;
        let tmp = self.root.join(".tmp").join(format!(
            "{}.{}.{}",
            cid.hex(),
            std::process::id(),
            self.tmp_counter.fetch_add(1, Ordering::Relaxed)
        ));
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(bytes)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, &path)?;
        Ok(PutReceipt {
            cid,
            created: true,
            empty,
        })
    }

    fn get(&self, cid: &ContentId) -> Result<Vec<u8>, StoreError> {
        let bytes = match fs::read(self.blob_path(cid)) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(StoreError::NotFound(*cid))
            }
            Err(e) => return Err(e.into()),
        };
        if ContentId::of(&bytes) != *cid {
            return Err(StoreError::Corrupt(*cid));
        }
        Ok(bytes)
    }

    fn contains(&self, cid: &ContentId) -> bool {
        self.blob_path(cid).is_file()
    }
}

/// In-memory store used by simulations.
#[derive(Debug, Default)]
pub struct MemStore {
    blobs: RwLock<BTreeMap<ContentId, Vec<u8>>>,
}

impl MemStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.blobs.read().expect("store lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl BlobStore for MemStore {
    fn put_blob(&self, bytes: &[u8]) -> Result<PutReceipt, StoreError> {
        let cid = ContentId::of(bytes);
        let mut blobs = self.blobs.write().expect("store lock poisoned");
        let created = !blobs.contains_key(&cid);
        if created {
            blobs.insert(cid, bytes.to_vec());
        }
        Ok(PutReceipt {
            cid,
            created,
            empty: bytes.is_empty(),
        })
    }

    fn get(&self, cid: &ContentId) -> Result<Vec<u8>, StoreError> {
        self.blobs
            .read()
            .expect("store lock poisoned")
            .get(cid)
            .cloned()
            .ok_or(StoreError::NotFound(*cid))
    }

    fn contains(&self, cid: &ContentId) -> bool {
        self.blobs
            .read()
            .expect("store lock poisoned")
            .contains_key(cid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn abc_test_vector() {
        let cid = ContentId::of(b"abc");
        assert_eq!(
            cid.hex(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert_eq!(
            cid.to_string(),
            "cidv0-sha256:ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert_eq!(cid.to_string().parse::<ContentId>().unwrap(), cid);
    }

    #[test]
    fn malformed_ids_rejected() {
        for s in [
            "ba7816bf",
            "cidv0-sha256:xyz",
            "cidv0-sha256:BA7816BF8F01CFEA414140DE5DAE2223B00361A396177A9CB410FF61F20015AD",
        ] {
            assert!(s.parse::<ContentId>().is_err(), "{s}");
        }
    }

    #[test]
    fn fs_put_is_idempotent_and_listable() {
        let dir = tempfile::tempdir().unwrap();
        let store = FsStore::open(dir.path()).unwrap();
        let a = store.put_blob(b"model-a").unwrap();
        let again = store.put_blob(b"model-a").unwrap();
        assert!(a.created && !again.created);
        assert_eq!(a.cid, again.cid);
        let b = store.put(b"model-b").unwrap();
        assert_ne!(a.cid, b);
        assert_eq!(store.list().unwrap().len(), 2);

        // a fresh handle on the same directory sees everything
        let reopened = FsStore::open(dir.path()).unwrap();
        assert_eq!(reopened.get(&a.cid).unwrap(), b"model-a");
        assert_eq!(reopened.list().unwrap(), store.list().unwrap());
    }

    #[test]
    fn fs_get_unknown_and_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let store = FsStore::open(dir.path()).unwrap();
        let unknown = ContentId::of(b"nope");
        assert!(matches!(store.get(&unknown), Err(StoreError::NotFound(_))));

        let cid = store.put(b"payload").unwrap();
        fs::write(store.blob_path(&cid), b"tampered").unwrap();
        assert!(matches!(store.get(&cid), Err(StoreError::Corrupt(_))));
    }

    #[test]
    fn empty_blob_is_flagged() {
        let store = MemStore::new();
        let r = store.put_blob(b"").unwrap();
        assert!(r.empty);
        assert_eq!(store.get(&r.cid).unwrap(), Vec::<u8>::new());
    }

    #[test]
    fn ten_megabyte_roundtrip_reverifies() {
        let dir = tempfile::tempdir().unwrap();
        let store = FsStore::open(dir.path()).unwrap();
        let blob: Vec<u8> = (0..10 * 1024 * 1024u32)
            .map(|i| (i.wrapping_mul(2654435761) >> 13) as u8)
            .collect();
        let cid = store.put(&blob).unwrap();
        let back = store.get(&cid).unwrap();
        assert_eq!(ContentId::of(&back), cid);
        assert_eq!(back.len(), blob.len());
    }

    proptest! {
        #[test]
        fn mem_get_put_identity(blob in proptest::collection::vec(any::<u8>(), 0..512)) {
            let store = MemStore::new();
            let cid = store.put(&blob).unwrap();
            prop_assert_eq!(store.get(&cid).unwrap(), blob);
        }
    }
}
