use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::GuidanceError;
use crate::types::{GuidanceBundle, GuidanceKind};

/// One cache line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub instance_id: String,
    pub kind: GuidanceKind,
    pub text: String,
    /// `"stub"` or `"plugin:<name>"`; ingested files use `"file:<name>"`.
    pub source: String,
}

/// Guidance strings keyed by `(instance_id, kind)`, persisted as JSONL.
///
/// Reads take `&self` and writes `&mut self`; share across threads behind an
/// `RwLock` for many readers and one writer.
#[derive(Debug, Default)]
pub struct GuidanceCache {
    path: Option<PathBuf>,
    entries: BTreeMap<(String, GuidanceKind), CacheEntry>,
}

impl GuidanceCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens `path`, loading existing entries; a missing file is an empty cache.
    pub fn open(path: &Path) -> Result<Self, GuidanceError> {
        let mut cache = Self {
            path: Some(path.to_path_buf()),
            entries: BTreeMap::new(),
        };
        if !path.exists() {
            return Ok(cache);
        }
        let io = |message: String| GuidanceError::CacheIo {
            path: path.display().to_string(),
            message,
        };
        let reader = BufReader::new(File::open(path).map_err(|e| io(e.to_string()))?);
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| io(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: CacheEntry =
                serde_json::from_str(&line).map_err(|e| io(format!("line {}: {e}", i + 1)))?;
            let key = (entry.instance_id.clone(), entry.kind);
            if cache.entries.insert(key, entry).is_some() {
                return Err(io(format!("line {}: duplicate key", i + 1)));
            }
        }
        Ok(cache)
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, instance_id: &str, kind: GuidanceKind) -> bool {
        self.entries.contains_key(&(instance_id.to_string(), kind))
    }

    /// Stores `text`. An existing key is a conflict unless `overwrite`.
    pub fn put(
        &mut self,
        instance_id: &str,
        kind: GuidanceKind,
        text: &str,
        source: &str,
        overwrite: bool,
    ) -> Result<(), GuidanceError> {
        // Reuse the bundle invariants (non-empty, no control characters).
        GuidanceBundle::new(instance_id).with(kind, text)?;
        let key = (instance_id.to_string(), kind);
        if !overwrite && self.entries.contains_key(&key) {
            return Err(GuidanceError::CacheConflict {
                instance_id: instance_id.to_string(),
                kind,
            });
        }
        self.entries.insert(
            key,
            CacheEntry {
                instance_id: instance_id.to_string(),
                kind,
                text: text.to_string(),
                source: source.to_string(),
            },
        );
        Ok(())
    }

    pub fn get(&self, instance_id: &str, kind: GuidanceKind) -> Option<&str> {
        self.entries
            .get(&(instance_id.to_string(), kind))
            .map(|e| e.text.as_str())
    }

    /// Every cached kind for one instance, or `None` when nothing is cached.
    pub fn bundle(&self, instance_id: &str) -> Option<GuidanceBundle> {
        let mut bundle = GuidanceBundle::new(instance_id);
        for kind in GuidanceKind::ALL {
            if let Some(text) = self.get(instance_id, kind) {
                bundle
                    .insert(kind, text)
                    .expect("cache entries satisfy bundle invariants");
            }
        }
        (!bundle.is_empty()).then_some(bundle)
    }

    pub fn entries(&self) -> impl Iterator<Item = &CacheEntry> {
        self.entries.values()
    }

    /// Writes every entry, sorted by key, replacing the file atomically.
    pub fn save(&self) -> Result<(), GuidanceError> {
        let path = self.path.as_ref().ok_or_else(|| GuidanceError::CacheIo {
            path: "<memory>".into(),
            message: "cache has no backing file".into(),
        })?;
        let io = |message: String| GuidanceError::CacheIo {
            path: path.display().to_string(),
            message,
        };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| io(e.to_string()))?;
        }
        let tmp = path.with_extension("jsonl.tmp");
        {
            let mut w = BufWriter::new(File::create(&tmp).map_err(|e| io(e.to_string()))?);
            for entry in self.entries.values() {
                let line = serde_json::to_string(entry).map_err(|e| io(e.to_string()))?;
                writeln!(w, "{line}").map_err(|e| io(e.to_string()))?;
            }
            w.flush().map_err(|e| io(e.to_string()))?;
        }
        fs::rename(&tmp, path).map_err(|e| io(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn put_get_and_miss() {
        let mut c = GuidanceCache::in_memory();
        c.put("q1", GuidanceKind::Caption, "a dog", "stub", false).unwrap();
        assert_eq!(c.get("q1", GuidanceKind::Caption), Some("a dog"));
        assert_eq!(c.get("q2", GuidanceKind::Caption), None);
        assert_eq!(c.get("q1", GuidanceKind::Rationale), None);
    }

    #[test]
    fn conflicts_unless_overwrite() {
        let mut c = GuidanceCache::in_memory();
        c.put("q1", GuidanceKind::Caption, "a dog", "stub", false).unwrap();
        assert!(matches!(
            c.put("q1", GuidanceKind::Caption, "a cat", "stub", false),
            Err(GuidanceError::CacheConflict { .. })
        ));
        c.put("q1", GuidanceKind::Caption, "a cat", "stub", true).unwrap();
        assert_eq!(c.get("q1", GuidanceKind::Caption), Some("a cat"));
        assert!(c.put("q1", GuidanceKind::Objects, "", "stub", false).is_err());
    }

    #[test]
    fn unicode_survives_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/cache.jsonl");
        let text = "un chien 🐕 sur la plage — «été» \u{200b}零";
        let mut c = GuidanceCache::open(&path).unwrap();
        c.put("q1", GuidanceKind::Rationale, text, "stub", false).unwrap();
        c.save().unwrap();
        let back = GuidanceCache::open(&path).unwrap();
        assert_eq!(back.get("q1", GuidanceKind::Rationale).unwrap().as_bytes(), text.as_bytes());
        assert_eq!(back.bundle("q1").unwrap().len(), 1);
        assert!(back.bundle("q9").is_none());
    }
}
