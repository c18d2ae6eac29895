//! On-disk corpus format: one JSON record per line, one record per
//! (image, class) pair.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{ClassCorpus, CorpusEntry, TextSource};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Record {
    v: u32,
    image_id: String,
    class_id: u32,
    class_label: String,
    fg_texts: Vec<String>,
    fg_kinds: Vec<TextSource>,
    bg_texts: Vec<String>,
    bg_kinds: Vec<TextSource>,
    template_version: String,
    backend_id: String,
}

/// All corpora for a dataset, keyed by (image id, class id).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusStore {
    template_version: String,
    backend_id: String,
    records: BTreeMap<(String, u32), ClassCorpus>,
}

impl CorpusStore {
    pub fn new(template_version: impl Into<String>, backend_id: impl Into<String>) -> Self {
        Self {
            template_version: template_version.into(),
            backend_id: backend_id.into(),
            records: BTreeMap::new(),
        }
    }

    pub fn template_version(&self) -> &str {
        &self.template_version
    }

    pub fn backend_id(&self) -> &str {
        &self.backend_id
    }

    pub fn insert(&mut self, image_id: &str, corpus: ClassCorpus) {
        self.records.insert((image_id.to_string(), corpus.class_id()), corpus);
    }

    pub fn get(&self, image_id: &str, class_id: u32) -> Option<&ClassCorpus> {
        self.records.get(&(image_id.to_string(), class_id))
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(String, u32), &ClassCorpus)> {
        self.records.iter()
    }

    /// Apply a text-source filter to every record.
    pub fn filtered(&self, variant: &super::CorpusVariant) -> Result<CorpusStore> {
        let mut out = CorpusStore::new(&self.template_version, &self.backend_id);
        for ((image_id, _), corpus) in self.records.iter() {
            out.insert(image_id, corpus.filtered(variant)?);
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for ((image_id, _), corpus) in self.records.iter() {
            let record = Record {
                v: SCHEMA_VERSION,
                image_id: image_id.clone(),
                class_id: corpus.class_id(),
                class_label: corpus.class_label().to_string(),
                fg_texts: corpus.fg().iter().map(|e| e.text.clone()).collect(),
                fg_kinds: corpus.fg().iter().map(|e| e.source).collect(),
                bg_texts: corpus.bg().iter().map(|e| e.text.clone()).collect(),
                bg_kinds: corpus.bg().iter().map(|e| e.source).collect(),
                template_version: self.template_version.clone(),
                backend_id: self.backend_id.clone(),
            };
            out.push_str(&serde_json::to_string(&record)?);
            out.push('\n');
        }
        std::fs::write(path, out).map_err(Error::io(path))
    }

    pub fn load(path: &Path) -> Result<CorpusStore> {
        let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
        let mut store: Option<CorpusStore> = None;
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: Record = serde_json::from_str(line)?;
            if record.v != SCHEMA_VERSION {
                return Err(Error::SchemaVersion { found: record.v, expected: SCHEMA_VERSION });
            }
            if record.fg_texts.len() != record.fg_kinds.len()
                || record.bg_texts.len() != record.bg_kinds.len()
            {
                return Err(Error::Corpus(format!(
                    "line {}: text/kind arrays disagree",
                    lineno + 1
                )));
            }
            let store = store.get_or_insert_with(|| {
                CorpusStore::new(&record.template_version, &record.backend_id)
            });
            if record.template_version != store.template_version
                || record.backend_id != store.backend_id
            {
                return Err(Error::Corpus(format!(
                    "line {}: mixed template versions or backends in one file",
                    lineno + 1
                )));
            }
            let fg: Vec<CorpusEntry> = record
                .fg_texts
                .iter()
                .zip(&record.fg_kinds)
                .map(|(t, k)| CorpusEntry { text: t.clone(), source: *k })
                .collect();
            let bg: Vec<CorpusEntry> = record
                .bg_texts
                .iter()
                .zip(&record.bg_kinds)
                .map(|(t, k)| CorpusEntry { text: t.clone(), source: *k })
                .collect();
            let corpus = ClassCorpus::new(record.class_id, &record.class_label, fg, bg)?;
            store.insert(&record.image_id, corpus);
        }
        store.ok_or_else(|| Error::Corpus(format!("{}: no records", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::build_baseline_corpus;

    fn sample_store() -> CorpusStore {
        let mut store = CorpusStore::new("builtin-v1", "mock");
        for (img, class_id, label) in [
            ("img_a", 1, "ruby"),
            ("img_a", 2, "jade"),
            ("img_a", 3, "cobalt"),
            ("img_b", 1, "ruby"),
            ("img_b", 2, "jade"),
            ("img_b", 3, "cobalt"),
        ] {
            store.insert(img, build_baseline_corpus(class_id, label).unwrap());
        }
        store
    }

    #[test]
    fn round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        let store = sample_store();
        store.save(&path).unwrap();
        let loaded = CorpusStore::load(&path).unwrap();
        assert_eq!(loaded, store);
    }

    #[test]
    fn two_images_three_classes_is_six_records() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        sample_store().save(&path).unwrap();
        let loaded = CorpusStore::load(&path).unwrap();
        assert_eq!(loaded.len(), 6);
    }

    #[test]
    fn wrong_schema_version_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        let store = sample_store();
        store.save(&path).unwrap();
        let bumped = std::fs::read_to_string(&path).unwrap().replace("\"v\":1", "\"v\":9");
        std::fs::write(&path, bumped).unwrap();
        match CorpusStore::load(&path) {
            Err(Error::SchemaVersion { found: 9, expected: 1 }) => {}
            other => panic!("expected schema version error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_record_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        std::fs::write(&path, "{not json}\n").unwrap();
        assert!(CorpusStore::load(&path).is_err());
    }
}
