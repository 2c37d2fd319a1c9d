//! Dataset manifests: newline-delimited JSON records.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

pub const SOBER: usize = 0;
pub const INTOXICATED: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Usage(format!(
                "unknown split '{other}' (expected train|val|test)"
            ))),
        }
    }
}

/// One labeled sample: where its payload lives and which split owns it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    /// Path relative to the manifest's directory.
    pub path: String,
    /// 0 = sober, 1 = intoxicated.
    pub label: usize,
    pub split: Split,
    pub duration_s: f64,
}

#[derive(Debug, Clone, Default)]
pub struct SampleManifest {
    pub records: Vec<ManifestRecord>,
}

pub const MANIFEST_FILE: &str = "manifest.jsonl";

impl SampleManifest {
    /// Validates invariants: unique ids, binary labels.
    pub fn new(records: Vec<ManifestRecord>) -> Result<Self> {
        let mut ids = HashSet::new();
        for r in &records {
            if !ids.insert(r.id.as_str()) {
                return Err(Error::Data(format!("duplicate sample id '{}'", r.id)));
            }
            if r.label > 1 {
                return Err(Error::Data(format!(
                    "sample '{}' has label {} (expected 0 or 1)",
                    r.id, r.label
                )));
            }
        }
        Ok(SampleManifest { records })
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let mut out = Vec::new();
        for r in &self.records {
            serde_json::to_writer(&mut out, r)
                .map_err(|e| Error::Data(format!("manifest serialize: {e}")))?;
            out.push(b'\n');
        }
        let mut f = fs::File::create(dir.join(MANIFEST_FILE))?;
        f.write_all(&out)?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path)
            .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
        let mut records = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let r: ManifestRecord = serde_json::from_str(line).map_err(|e| {
                Error::Data(format!("manifest line {}: {e}", lineno + 1))
            })?;
            records.push(r);
        }
        Self::new(records)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn rec(id: &str, split: Split, label: usize) -> ManifestRecord {
        ManifestRecord {
            id: id.into(),
            path: format!("{id}.stc"),
            label,
            split,
            duration_s: 2.0,
        }
    }

    #[test]
    fn round_trip() {
        let dir = tempdir().unwrap();
        let m = SampleManifest::new(vec![
            rec("a", Split::Train, 0),
            rec("b", Split::Val, 1),
            rec("c", Split::Test, 1),
        ])
        .unwrap();
        m.write(dir.path()).unwrap();
        let got = SampleManifest::read(dir.path()).unwrap();
        assert_eq!(got.records, m.records);
        assert_eq!(got.split(Split::Val).count(), 1);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let r = SampleManifest::new(vec![rec("a", Split::Train, 0), rec("a", Split::Val, 1)]);
        assert!(matches!(r, Err(Error::Data(_))));
    }

    #[test]
    fn bad_label_rejected() {
        assert!(SampleManifest::new(vec![rec("a", Split::Train, 2)]).is_err());
    }
}
