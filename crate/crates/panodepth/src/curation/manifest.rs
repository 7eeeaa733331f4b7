//! Sample records and JSON-lines manifests.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Scene category of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Indoor,
    Outdoor,
}

/// Where a sample came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Synthetic,
    Real,
    Generated,
}

/// One dataset sample: image, optional depth label, and curation metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub image_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth_path: Option<PathBuf>,
    pub domain: Domain,
    pub source: Source,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    /// Name of the stage that last emitted this record.
    #[serde(default)]
    pub stage_tag: String,
}

/// Which stage produced a manifest, and under which resolved configuration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub stage: String,
    pub config_hash: String,
}

/// Ordered list of sample records.
///
/// Construction through [`SampleManifest::new`] sorts records by id; stage
/// operations that define their own order (top-k selection, seeded mixing)
/// build manifests through the order-preserving constructor. Ids are unique
/// within a manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleManifest {
    records: Vec<SampleRecord>,
    provenance: Provenance,
}

impl SampleManifest {
    /// Canonical manifest: records sorted by id.
    pub fn new(mut records: Vec<SampleRecord>, provenance: Provenance) -> Result<Self> {
        records.sort_by(|a, b| a.id.cmp(&b.id));
        Self::from_ordered(records, provenance)
    }

    /// Keeps the caller's record order (stage-defined orders).
    pub fn from_ordered(records: Vec<SampleRecord>, provenance: Provenance) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for r in &records {
            if !seen.insert(r.id.as_str()) {
                return Err(Error::invalid(format!(
                    "duplicate sample id `{}` in manifest",
                    r.id
                )));
            }
        }
        Ok(SampleManifest {
            records,
            provenance,
        })
    }

    pub fn records(&self) -> &[SampleRecord] {
        &self.records
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub(crate) fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    /// Serializes to JSON lines, one record per line, in manifest order.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    /// Writes the manifest as a `.jsonl` file.
    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_jsonl())?;
        Ok(())
    }

    /// Loads a `.jsonl` manifest. Provenance is not part of the record lines;
    /// the pipeline restores it from the stage's meta file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse_jsonl(&text, path)
    }

    pub fn parse_jsonl(text: &str, origin: &Path) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: SampleRecord = serde_json::from_str(line).map_err(|e| Error::Format {
                path: origin.to_path_buf(),
                offset: None,
                msg: format!("manifest line {}: {e}", i + 1),
            })?;
            records.push(rec);
        }
        Self::from_ordered(records, Provenance::default())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    pub(crate) fn record(id: &str, domain: Domain, score: Option<f64>) -> SampleRecord {
        SampleRecord {
            id: id.to_string(),
            image_path: PathBuf::from(format!("images/{id}.png")),
            depth_path: None,
            domain,
            source: Source::Real,
            score,
            stage_tag: String::new(),
        }
    }

    #[test]
    fn new_sorts_by_id_and_rejects_duplicates() {
        let m = SampleManifest::new(
            vec![
                record("b", Domain::Indoor, None),
                record("a", Domain::Outdoor, None),
            ],
            Provenance::default(),
        )
        .unwrap();
        assert_eq!(m.records()[0].id, "a");
        assert!(SampleManifest::new(
            vec![
                record("a", Domain::Indoor, None),
                record("a", Domain::Indoor, None)
            ],
            Provenance::default(),
        )
        .is_err());
    }

    #[test]
    fn jsonl_round_trip_preserves_records_and_order() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        let mut rec = record("z", Domain::Outdoor, Some(0.25));
        rec.depth_path = Some(PathBuf::from("depth/z.pfm"));
        let m = SampleManifest::from_ordered(
            vec![rec, record("a", Domain::Indoor, None)],
            Provenance::default(),
        )
        .unwrap();
        m.save(&path).unwrap();
        let back = SampleManifest::load(&path).unwrap();
        assert_eq!(m.records(), back.records());
    }

    #[test]
    fn bad_lines_name_their_position() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(&path, "{\"id\": \"a\"\n").unwrap();
        let err = SampleManifest::load(&path).unwrap_err();
        assert!(err.to_string().contains("line 1"));
    }
}
