use std::path::{Path, PathBuf};

use log::info;
use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::dataset::ExpressionMatrix;
use crate::error::{LeapError, Result};

/// Directory of stage outputs named by a hash of everything that determines
/// them.
#[derive(Debug, Clone)]
pub struct StageCache {
    dir: PathBuf,
}

/// Incremental hash builder for cache keys.
pub struct Key(Sha256);

impl Key {
    pub fn new(stage: &str) -> Self {
        let mut k = Key(Sha256::new());
        k.text(stage);
        k
    }

    pub fn text(&mut self, s: &str) -> &mut Self {
        self.0.update((s.len() as u64).to_le_bytes());
        self.0.update(s.as_bytes());
        self
    }

    pub fn json(&mut self, v: &impl Serialize) -> Result<&mut Self> {
        let s = serde_json::to_string(v)?;
        Ok(self.text(&s))
    }

    pub fn matrix(&mut self, m: &ExpressionMatrix) -> &mut Self {
        for s in m.sample_ids().iter().chain(m.gene_ids()) {
            self.text(s);
        }
        for v in m.values().iter() {
            self.0.update(v.to_bits().to_le_bytes());
        }
        self
    }

    pub fn finish(&self) -> String {
        hex::encode(self.0.clone().finalize())
    }
}

impl StageCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, stage: &str, key: &str) -> PathBuf {
        self.dir.join(format!("{stage}-{}.json", &key[..16]))
    }

    /// Load the stored output for `key`, or compute and store it.
    pub fn get_or_compute<T, F>(&self, stage: &str, key: &Key, compute: F) -> Result<T>
    where
        T: Serialize + DeserializeOwned,
        F: FnOnce() -> Result<T>,
    {
        let key = key.finish();
        let path = self.path(stage, &key);
        if let Ok(bytes) = std::fs::read(&path) {
            if let Ok((stored_key, value)) = serde_json::from_slice::<(String, T)>(&bytes) {
                if stored_key == key {
                    info!("cache hit: {stage} ({})", path.display());
                    return Ok(value);
                }
            }
        }
        let value = compute()?;
        std::fs::create_dir_all(&self.dir).map_err(|e| LeapError::io(&self.dir, e))?;
        let bytes = serde_json::to_vec(&(&key, &value))?;
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, bytes).map_err(|e| LeapError::io(&tmp, e))?;
        std::fs::rename(&tmp, &path).map_err(|e| LeapError::io(&path, e))?;
        info!("cached {stage} ({})", path.display());
        Ok(value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::Cell;

    #[test]
    fn second_request_is_served_from_disk() {
        let dir = tempfile::tempdir().unwrap();
        let cache = StageCache::new(dir.path());
        let calls = Cell::new(0);
        let mut key = Key::new("s");
        key.text("x");
        for _ in 0..2 {
            let v: Vec<f64> = cache
                .get_or_compute("s", &key, || {
                    calls.set(calls.get() + 1);
                    Ok(vec![0.1, 0.2])
                })
                .unwrap();
            assert_eq!(v, vec![0.1, 0.2]);
        }
        assert_eq!(calls.get(), 1);
        let mut other = Key::new("s");
        other.text("y");
        let _: Vec<f64> = cache
            .get_or_compute("s", &other, || {
                calls.set(calls.get() + 1);
                Ok(vec![])
            })
            .unwrap();
        assert_eq!(calls.get(), 2);
    }

    #[test]
    fn key_separates_concatenations() {
        let mut a = Key::new("s");
        a.text("ab").text("c");
        let mut b = Key::new("s");
        b.text("a").text("bc");
        assert_ne!(a.finish(), b.finish());
    }
}
