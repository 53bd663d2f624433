use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::Variant;
use crate::error::{Error, Result};

pub const CACHE_FILE: &str = "gen_cache.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub text: String,
    pub model: String,
    pub variant: Variant,
    pub anchor: usize,
    pub partner: usize,
}

/// Everything a generation depends on. Seed texts are part of the key so
/// editing a dataset invalidates earlier generations.
#[derive(Debug, Clone, Copy)]
pub struct CacheKeyParts<'a> {
    pub variant: Variant,
    pub anchor: usize,
    pub partner: usize,
    pub anchor_text: &'a str,
    pub partner_text: &'a str,
    pub class_name: &'a str,
    pub model: &'a str,
    pub temperature: f64,
    pub spec_digest: &'a str,
    pub attempt: usize,
}

impl CacheKeyParts<'_> {
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        let mut field = |bytes: &[u8]| {
            h.update((bytes.len() as u64).to_le_bytes());
            h.update(bytes);
        };
        field(self.variant.as_str().as_bytes());
        field(&(self.anchor as u64).to_le_bytes());
        field(&(self.partner as u64).to_le_bytes());
        field(self.anchor_text.as_bytes());
        field(self.partner_text.as_bytes());
        field(self.class_name.as_bytes());
        field(self.model.as_bytes());
        field(&self.temperature.to_bits().to_le_bytes());
        field(self.spec_digest.as_bytes());
        field(&(self.attempt as u64).to_le_bytes());
        hex::encode(h.finalize())
    }
}

/// Append-only JSONL store of parsed generations.
#[derive(Debug, Default)]
pub struct GenerationCache {
    path: Option<PathBuf>,
    entries: HashMap<String, CacheEntry>,
}

impl GenerationCache {
    /// A cache that lives only in memory.
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or prepares to create) a cache file. A truncated final line,
    /// left by an interrupted run, is ignored with a warning.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut entries = HashMap::new();
        if path.exists() {
            let lines: Vec<String> =
                BufReader::new(File::open(&path)?).lines().collect::<std::io::Result<_>>()?;
            let last = lines.len();
            for (i, line) in lines.iter().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<CacheEntry>(line) {
                    Ok(e) => {
                        entries.insert(e.key.clone(), e);
                    }
                    Err(err) if i + 1 == last => {
                        log::warn!("{}: ignoring truncated last line: {err}", path.display());
                    }
                    Err(err) => {
                        return Err(Error::Parse {
                            file: path.clone(),
                            line: i + 1,
                            msg: err.to_string(),
                        })
                    }
                }
            }
        }
        Ok(Self {
            path: Some(path),
            entries,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&CacheEntry> {
        self.entries.get(key)
    }

    /// Stores entries in memory and appends them to the file in the order
    /// given.
    pub fn append(&mut self, new: Vec<CacheEntry>) -> Result<()> {
        if new.is_empty() {
            return Ok(());
        }
        if let Some(path) = &self.path {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            let file = OpenOptions::new().create(true).append(true).open(path)?;
            let mut out = BufWriter::new(file);
            for e in &new {
                serde_json::to_writer(&mut out, e)?;
                out.write_all(b"\n")?;
            }
            out.flush()?;
        }
        for e in new {
            self.entries.insert(e.key.clone(), e);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parts(attempt: usize) -> CacheKeyParts<'static> {
        CacheKeyParts {
            variant: Variant::S,
            anchor: 1,
            partner: 2,
            anchor_text: "a",
            partner_text: "b",
            class_name: "c",
            model: "m",
            temperature: 0.8,
            spec_digest: "d",
            attempt,
        }
    }

    #[test]
    fn key_depends_on_every_part() {
        let base = parts(0).digest();
        assert_eq!(base, parts(0).digest());
        assert_ne!(base, parts(1).digest());
        let mut p = parts(0);
        p.anchor_text = "a2";
        assert_ne!(base, p.digest());
        let mut p = parts(0);
        p.temperature = 0.7;
        assert_ne!(base, p.digest());
        let mut p = parts(0);
        p.variant = Variant::M;
        assert_ne!(base, p.digest());
    }

    #[test]
    fn persists_and_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(CACHE_FILE);
        let entry = CacheEntry {
            key: "k".into(),
            text: "hello\nworld".into(),
            model: "m".into(),
            variant: Variant::O,
            anchor: 3,
            partner: 3,
        };
        let mut c = GenerationCache::open(&path).unwrap();
        c.append(vec![entry.clone()]).unwrap();
        let line = fs::read_to_string(&path).unwrap();
        assert_eq!(
            serde_json::from_str::<serde_json::Value>(line.trim()).unwrap(),
            serde_json::json!({"key": "k", "text": "hello\nworld", "model": "m",
                               "variant": "O", "anchor": 3, "partner": 3})
        );
        let again = GenerationCache::open(&path).unwrap();
        assert_eq!(again.get("k"), Some(&entry));
    }

    #[test]
    fn truncated_tail_is_tolerated() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(CACHE_FILE);
        fs::write(
            &path,
            "{\"key\":\"k\",\"text\":\"t\",\"model\":\"m\",\"variant\":\"S\",\"anchor\":0,\"partner\":1}\n{\"key\":\"x\",\"te",
        )
        .unwrap();
        assert_eq!(GenerationCache::open(&path).unwrap().len(), 1);
        fs::write(&path, "garbage\n{}\n").unwrap();
        assert!(GenerationCache::open(&path).is_err());
    }
}
