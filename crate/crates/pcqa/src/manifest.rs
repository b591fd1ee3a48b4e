//! Database manifests and group-level k-fold splitting.
//!
//! A manifest is a CSV with header `cloud_name,ply_path,mos,group_id` plus a
//! JSON sidecar `<stem>.meta.json` declaring `database_name`, `mos_min`, and
//! `mos_max`. Groups identify reference content: distorted versions of one
//! reference share a group and never straddle a train/test boundary.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rating::MosRange;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("manifest is missing column '{0}'")]
    MissingColumn(&'static str),
    #[error("duplicate cloud name '{0}'")]
    DuplicateName(String),
    #[error("mos {mos} of '{name}' outside declared range [{min}, {max}]")]
    MosOutOfDeclaredRange {
        name: String,
        mos: f64,
        min: f64,
        max: f64,
    },
    #[error("manifest has no entries")]
    Empty,
    #[error("bad sidecar metadata: {0}")]
    BadSidecar(String),
    #[error("bad manifest record: {0}")]
    BadRecord(String),
    #[error("cannot split {groups} groups into {k} folds")]
    TooManyFolds { groups: usize, k: usize },
}

/// One distorted cloud: where it lives, its subjective score, and the
/// reference content it belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub cloud_name: String,
    pub ply_path: PathBuf,
    pub mos: f64,
    pub group_id: String,
}

/// A validated database manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    pub score_range: MosRange,
    pub database_name: String,
}

impl Manifest {
    /// Validates uniqueness of names and that every MOS lies inside the
    /// declared range.
    pub fn new(
        entries: Vec<ManifestEntry>,
        score_range: MosRange,
        database_name: impl Into<String>,
    ) -> Result<Self, ManifestError> {
        if entries.is_empty() {
            return Err(ManifestError::Empty);
        }
        let mut seen = BTreeSet::new();
        for e in &entries {
            if !seen.insert(e.cloud_name.clone()) {
                return Err(ManifestError::DuplicateName(e.cloud_name.clone()));
            }
            if !score_range.contains(e.mos) {
                return Err(ManifestError::MosOutOfDeclaredRange {
                    name: e.cloud_name.clone(),
                    mos: e.mos,
                    min: score_range.min,
                    max: score_range.max,
                });
            }
        }
        Ok(Self {
            entries,
            score_range,
            database_name: database_name.into(),
        })
    }

    /// Distinct group ids in first-appearance order.
    pub fn groups(&self) -> Vec<String> {
        let mut out = Vec::new();
        for e in &self.entries {
            if !out.contains(&e.group_id) {
                out.push(e.group_id.clone());
            }
        }
        out
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SidecarMeta {
    database_name: String,
    mos_min: f64,
    mos_max: f64,
}

/// Path of the metadata sidecar belonging to a manifest CSV.
pub fn sidecar_path(manifest_path: &Path) -> PathBuf {
    manifest_path.with_extension("meta.json")
}

/// Loads and validates a manifest CSV plus its metadata sidecar.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest, ManifestError> {
    let path = path.as_ref();
    let meta_path = sidecar_path(path);
    let meta_text = std::fs::read_to_string(&meta_path).map_err(|e| {
        ManifestError::BadSidecar(format!("cannot read {}: {e}", meta_path.display()))
    })?;
    let meta: SidecarMeta =
        serde_json::from_str(&meta_text).map_err(|e| ManifestError::BadSidecar(e.to_string()))?;
    let range = MosRange::new(meta.mos_min, meta.mos_max)
        .map_err(|e| ManifestError::BadSidecar(e.to_string()))?;

    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &'static str| -> Result<usize, ManifestError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or(ManifestError::MissingColumn(name))
    };
    let name_col = col("cloud_name")?;
    let path_col = col("ply_path")?;
    let mos_col = col("mos")?;
    let group_col = col("group_id")?;

    let mut entries = Vec::new();
    for record in reader.records() {
        let record = record?;
        let mos: f64 = record
            .get(mos_col)
            .unwrap_or_default()
            .trim()
            .parse()
            .map_err(|_| ManifestError::BadRecord(format!(
                "unparseable mos '{}'",
                record.get(mos_col).unwrap_or_default()
            )))?;
        entries.push(ManifestEntry {
            cloud_name: record.get(name_col).unwrap_or_default().to_string(),
            ply_path: PathBuf::from(record.get(path_col).unwrap_or_default()),
            mos,
            group_id: record.get(group_col).unwrap_or_default().to_string(),
        });
    }
    Manifest::new(entries, range, meta.database_name)
}

/// Writes a manifest CSV and its sidecar; inverse of [`load_manifest`].
pub fn save_manifest(manifest: &Manifest, path: impl AsRef<Path>) -> Result<(), ManifestError> {
    let path = path.as_ref();
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["cloud_name", "ply_path", "mos", "group_id"])?;
    for e in &manifest.entries {
        writer.write_record([
            e.cloud_name.as_str(),
            &e.ply_path.to_string_lossy(),
            &e.mos.to_string(),
            e.group_id.as_str(),
        ])?;
    }
    writer.flush()?;
    let meta = SidecarMeta {
        database_name: manifest.database_name.clone(),
        mos_min: manifest.score_range.min,
        mos_max: manifest.score_range.max,
    };
    std::fs::write(
        sidecar_path(path),
        serde_json::to_string_pretty(&meta).unwrap(),
    )?;
    Ok(())
}

/// One cross-validation fold: disjoint train/test group sets covering all
/// groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub fold_index: usize,
    pub train_groups: BTreeSet<String>,
    pub test_groups: BTreeSet<String>,
}

impl FoldSplit {
    pub fn is_train(&self, group_id: &str) -> bool {
        self.train_groups.contains(group_id)
    }

    pub fn is_test(&self, group_id: &str) -> bool {
        self.test_groups.contains(group_id)
    }
}

/// Partitions the manifest's groups into k folds: groups are shuffled by a
/// seeded permutation and cut into k test blocks whose sizes differ by at
/// most one. Every group lands in exactly one test block.
pub fn group_kfold(
    manifest: &Manifest,
    k: usize,
    seed: u64,
) -> Result<Vec<FoldSplit>, ManifestError> {
    let mut groups = manifest.groups();
    if k < 1 || k > groups.len() {
        return Err(ManifestError::TooManyFolds {
            groups: groups.len(),
            k,
        });
    }
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
    groups.shuffle(&mut rng);

    let base = groups.len() / k;
    let rem = groups.len() % k;
    let mut folds = Vec::with_capacity(k);
    let mut cursor = 0;
    for fold_index in 0..k {
        let size = base + usize::from(fold_index < rem);
        let test_groups: BTreeSet<String> = groups[cursor..cursor + size].iter().cloned().collect();
        let train_groups: BTreeSet<String> = groups
            .iter()
            .filter(|g| !test_groups.contains(*g))
            .cloned()
            .collect();
        folds.push(FoldSplit {
            fold_index,
            train_groups,
            test_groups,
        });
        cursor += size;
    }
    Ok(folds)
}
