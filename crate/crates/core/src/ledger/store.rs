use std::collections::HashMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use crate::digest::ContentHash;

/// Write-once blob storage keyed by content hash.
pub trait ObjectStore: Send + Sync {
    /// Stores `bytes` under `hash`. Writing an existing key is a no-op.
    fn put(&self, hash: &ContentHash, bytes: &[u8]) -> io::Result<()>;
    fn get(&self, hash: &ContentHash) -> io::Result<Option<Vec<u8>>>;
    fn contains(&self, hash: &ContentHash) -> io::Result<bool>;
    fn list(&self) -> io::Result<Vec<ContentHash>>;
}

#[derive(Debug, Default)]
pub struct MemoryStore {
    blobs: RwLock<HashMap<ContentHash, Vec<u8>>>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }
}

impl ObjectStore for MemoryStore {
    fn put(&self, hash: &ContentHash, bytes: &[u8]) -> io::Result<()> {
        let mut blobs = self.blobs.write().expect("store lock poisoned");
        blobs.entry(hash.clone()).or_insert_with(|| bytes.to_vec());
        Ok(())
    }

    fn get(&self, hash: &ContentHash) -> io::Result<Option<Vec<u8>>> {
        Ok(self.blobs.read().expect("store lock poisoned").get(hash).cloned())
    }

    fn contains(&self, hash: &ContentHash) -> io::Result<bool> {
        Ok(self.blobs.read().expect("store lock poisoned").contains_key(hash))
    }

    fn list(&self) -> io::Result<Vec<ContentHash>> {
        let mut out: Vec<_> = self.blobs.read().expect("store lock poisoned").keys().cloned().collect();
        out.sort();
        Ok(out)
    }
}

/// `objects/<hh>/<rest>` layout on disk.
#[derive(Debug, Clone)]
pub struct DirStore {
    root: PathBuf,
}

impl DirStore {
    pub fn open(root: impl Into<PathBuf>) -> io::Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(DirStore { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_for(&self, hash: &ContentHash) -> PathBuf {
        let (head, rest) = hash.as_str().split_at(2);
        self.root.join(head).join(rest)
    }
}

impl ObjectStore for DirStore {
    fn put(&self, hash: &ContentHash, bytes: &[u8]) -> io::Result<()> {
        let path = self.path_for(hash);
        if path.exists() {
            return Ok(());
        }
        let dir = path.parent().expect("object path has a parent");
        fs::create_dir_all(dir)?;
        // Write under a unique temp name, then rename into place so a
        // crash never leaves a truncated object behind.
        let tmp = dir.join(format!(".tmp-{}-{:?}", std::process::id(), std::thread::current().id()));
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(bytes)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, &path)
    }

    fn get(&self, hash: &ContentHash) -> io::Result<Option<Vec<u8>>> {
        match fs::read(self.path_for(hash)) {
            Ok(b) => Ok(Some(b)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn contains(&self, hash: &ContentHash) -> io::Result<bool> {
        Ok(self.path_for(hash).is_file())
    }

    fn list(&self) -> io::Result<Vec<ContentHash>> {
        let mut out = Vec::new();
        for head in fs::read_dir(&self.root)? {
            let head = head?;
            if !head.file_type()?.is_dir() {
                continue;
            }
            let prefix = head.file_name().to_string_lossy().into_owned();
            for obj in fs::read_dir(head.path())? {
                let name = obj?.file_name().to_string_lossy().into_owned();
                if let Ok(h) = ContentHash::parse(&format!("{prefix}{name}")) {
                    out.push(h);
                }
            }
        }
        out.sort();
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dir_store_fans_out_by_first_byte() {
        let dir = tempfile::tempdir().unwrap();
        let store = DirStore::open(dir.path().join("objects")).unwrap();
        let h = ContentHash::of(b"a");
        store.put(&h, b"a").unwrap();
        let expected = dir.path().join("objects/ca/978112ca1bbdcafac231b39a23dc4da786eff8147c4e72b9807785afee48bb");
        assert!(expected.is_file());
        assert_eq!(store.get(&h).unwrap().unwrap(), b"a");
        assert_eq!(store.list().unwrap(), vec![h]);
    }

    #[test]
    fn memory_store_is_write_once() {
        let store = MemoryStore::new();
        let h = ContentHash::of(b"x");
        store.put(&h, b"x").unwrap();
        store.put(&h, b"y").unwrap();
        assert_eq!(store.get(&h).unwrap().unwrap(), b"x");
    }
}
