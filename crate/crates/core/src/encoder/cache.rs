//! On-disk embedding cache: one JSON file per content hash.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{EncoderError, ProviderSpec, Result};

#[derive(Debug, Clone)]
pub struct DiskCache {
    dir: PathBuf,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    provider_id: String,
    model_id: String,
    content_hash: String,
    dimension: usize,
    checksum: String,
    values: Vec<f64>,
}

fn checksum(values: &[f64]) -> String {
    let mut h = Sha256::new();
    for v in values {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

impl DiskCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|source| EncoderError::Cache {
            path: dir.clone(),
            source,
        })?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, hash: &str) -> PathBuf {
        self.dir.join(format!("{hash}.json"))
    }

    /// Returns the cached vector, or `None` on a miss. Entries that fail any
    /// integrity check are deleted and reported as misses.
    pub fn read(&self, hash: &str, spec: &ProviderSpec) -> Result<Option<Vec<f64>>> {
        let path = self.path_for(hash);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(source) => return Err(EncoderError::Cache { path, source }),
        };
        let valid = serde_json::from_slice::<Entry>(&bytes).ok().filter(|e| {
            e.content_hash == hash
                && e.provider_id == spec.provider_id
                && e.model_id == spec.model_id
                && e.dimension == spec.dimension
                && e.values.len() == e.dimension
                && e.values.iter().all(|v| v.is_finite())
                && checksum(&e.values) == e.checksum
        });
        match valid {
            Some(entry) => Ok(Some(entry.values)),
            None => {
                log::warn!("evicting corrupt cache entry {}", path.display());
                fs::remove_file(&path).map_err(|source| EncoderError::Cache { path, source })?;
                Ok(None)
            }
        }
    }

    /// Writes through a temporary file and renames, so readers never see a partial entry.
    pub fn write(&self, hash: &str, spec: &ProviderSpec, values: &[f64]) -> Result<()> {
        let entry = Entry {
            provider_id: spec.provider_id.clone(),
            model_id: spec.model_id.clone(),
            content_hash: hash.to_string(),
            dimension: values.len(),
            checksum: checksum(values),
            values: values.to_vec(),
        };
        let path = self.path_for(hash);
        let tmp = self.dir.join(format!(
            ".{hash}.{}.{:?}.tmp",
            std::process::id(),
            std::thread::current().id()
        ));
        let io = |source| EncoderError::Cache {
            path: path.clone(),
            source,
        };
        let mut file = fs::File::create(&tmp).map_err(io)?;
        let body = serde_json::to_vec(&entry).expect("cache entry serializes");
        file.write_all(&body).map_err(io)?;
        file.sync_all().map_err(io)?;
        fs::rename(&tmp, &path).map_err(io)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::Encoder;

    #[test]
    fn corrupted_entry_is_evicted_and_refetched() {
        let dir = tempfile::tempdir().unwrap();
        let spec = ProviderSpec::mock("m", 8, 3);
        let enc = Encoder::from_spec(spec.clone()).unwrap().with_cache_dir(dir.path()).unwrap();
        let original = enc.embed("some text").unwrap();

        let path = enc.disk_cache().unwrap().path_for(&original.content_hash);
        let text = fs::read_to_string(&path).unwrap();
        let tampered = text.replacen("\"values\":[", "\"values\":[0.25,", 1);
        fs::write(&path, tampered).unwrap();

        // fresh encoder: empty memory cache, same disk
        let enc2 = Encoder::from_spec(spec).unwrap().with_cache_dir(dir.path()).unwrap();
        let again = enc2.embed("some text").unwrap();
        assert_eq!(again, original);
        assert_eq!(enc2.provider_calls(), 1);
        assert_eq!(fs::read_to_string(&path).unwrap(), text);
    }

    #[test]
    fn disk_hit_needs_no_provider() {
        let dir = tempfile::tempdir().unwrap();
        let spec = ProviderSpec::mock("m", 8, 3);
        let enc = Encoder::from_spec(spec.clone()).unwrap().with_cache_dir(dir.path()).unwrap();
        let v = enc.embed("cached").unwrap();
        let enc2 = Encoder::from_spec(spec).unwrap().with_cache_dir(dir.path()).unwrap();
        assert_eq!(enc2.embed("cached").unwrap(), v);
        assert_eq!(enc2.provider_calls(), 0);
    }

    #[test]
    fn garbage_file_is_a_miss() {
        let dir = tempfile::tempdir().unwrap();
        let spec = ProviderSpec::mock("m", 8, 3);
        let cache = DiskCache::open(dir.path()).unwrap();
        fs::write(cache.path_for("abc"), b"not json").unwrap();
        assert_eq!(cache.read("abc", &spec).unwrap(), None);
        assert!(!cache.path_for("abc").exists());
    }
}
