//! Checkpoint manifests: which weight file is which layer, before or after
//! training, under which regularization category and setting.
//!
//! ```json
//! {"entries": [{"layer": "fc1", "path": "pre/fc1.npy", "role": "pre",
//!               "category": "wd", "setting": "wd=1e-4", "dataset": "cifar"}]}
//! ```
//!
//! Entry order is significant: within one checkpoint, layers are listed in
//! network depth order.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("cannot read manifest {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest is not valid JSON for the entries schema: {0}")]
    Json(#[from] serde_json::Error),
    #[error("entry {index}: unknown category {value:?} (expected baseline, dp, wd or div)")]
    UnknownCategory { index: usize, value: String },
    #[error("entry {index}: unknown role {value:?} (expected pre or post)")]
    UnknownRole { index: usize, value: String },
    #[error("entry {index}: field {field:?} must not be empty")]
    EmptyField { index: usize, field: &'static str },
    #[error("duplicate entry for layer {layer:?} ({role}, {category}, {setting:?}, {dataset:?})")]
    Duplicate {
        layer: String,
        role: Role,
        category: Category,
        setting: String,
        dataset: String,
    },
    #[error("post entry for layer {layer:?} ({category}, {setting:?}, {dataset:?}) has no matching pre entry")]
    MissingPre {
        layer: String,
        category: Category,
        setting: String,
        dataset: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Pre,
    Post,
}

impl FromStr for Role {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "pre" => Ok(Role::Pre),
            "post" => Ok(Role::Post),
            _ => Err(()),
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Pre => "pre",
            Role::Post => "post",
        })
    }
}

/// Regularization category of a training run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    #[serde(rename = "baseline")]
    Baseline,
    #[serde(rename = "dp")]
    Dropout,
    #[serde(rename = "wd")]
    WeightDecay,
    #[serde(rename = "div")]
    Diversity,
}

impl Category {
    pub const ALL: [Category; 4] = [
        Category::Baseline,
        Category::Dropout,
        Category::WeightDecay,
        Category::Diversity,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Baseline => "baseline",
            Category::Dropout => "dp",
            Category::WeightDecay => "wd",
            Category::Diversity => "div",
        }
    }
}

impl FromStr for Category {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Category::ALL.into_iter().find(|c| c.as_str() == s).ok_or(())
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ManifestEntry {
    pub layer: String,
    pub path: String,
    pub role: Role,
    pub category: Category,
    pub setting: String,
    pub dataset: String,
}

/// Identity of one checkpoint: every entry sharing it belongs to the same
/// set of trained weights.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CheckpointKey {
    pub role: Role,
    pub category: Category,
    pub setting: String,
    pub dataset: String,
}

impl CheckpointKey {
    /// A filesystem-safe identifier, e.g. `post.wd.wd=1e-4.cifar`.
    pub fn slug(&self) -> String {
        let clean = |s: &str| -> String {
            s.chars()
                .map(|c| {
                    if c.is_ascii_alphanumeric() || "=-_.+".contains(c) {
                        c
                    } else {
                        '_'
                    }
                })
                .collect()
        };
        format!(
            "{}.{}.{}.{}",
            self.role,
            self.category,
            clean(&self.setting),
            clean(&self.dataset)
        )
    }
}

impl ManifestEntry {
    pub fn checkpoint(&self) -> CheckpointKey {
        CheckpointKey {
            role: self.role,
            category: self.category,
            setting: self.setting.clone(),
            dataset: self.dataset.clone(),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifest {
    entries: Vec<RawEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEntry {
    layer: String,
    path: String,
    role: String,
    category: String,
    setting: String,
    dataset: String,
}

/// A validated manifest. Relative entry paths resolve against `base_dir`.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointManifest {
    entries: Vec<ManifestEntry>,
    base_dir: PathBuf,
}

impl CheckpointManifest {
    pub fn new(entries: Vec<ManifestEntry>, base_dir: impl Into<PathBuf>) -> Result<Self, ManifestError> {
        validate(&entries)?;
        Ok(CheckpointManifest {
            entries,
            base_dir: base_dir.into(),
        })
    }

    pub fn from_json_str(src: &str, base_dir: impl Into<PathBuf>) -> Result<Self, ManifestError> {
        let raw: RawManifest = serde_json::from_str(src)?;
        let mut entries = Vec::with_capacity(raw.entries.len());
        for (index, e) in raw.entries.into_iter().enumerate() {
            for (field, value) in [("layer", &e.layer), ("path", &e.path)] {
                if value.is_empty() {
                    return Err(ManifestError::EmptyField { index, field });
                }
            }
            let role = e.role.parse().map_err(|_| ManifestError::UnknownRole {
                index,
                value: e.role.clone(),
            })?;
            let category = e.category.parse().map_err(|_| ManifestError::UnknownCategory {
                index,
                value: e.category.clone(),
            })?;
            entries.push(ManifestEntry {
                layer: e.layer,
                path: e.path,
                role,
                category,
                setting: e.setting,
                dataset: e.dataset,
            });
        }
        CheckpointManifest::new(entries, base_dir)
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        let p = Path::new(&entry.path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// The pre-training entry a post entry is compared against. Preference
    /// order: same layer with the same category, setting and dataset; then
    /// same layer and dataset; then the first pre entry for the layer.
    pub fn pre_for(&self, post: &ManifestEntry) -> Option<&ManifestEntry> {
        find_pre(&self.entries, post)
    }

    /// Entries grouped by checkpoint, each group in manifest (depth) order.
    pub fn checkpoints(&self) -> BTreeMap<CheckpointKey, Vec<&ManifestEntry>> {
        let mut out: BTreeMap<CheckpointKey, Vec<&ManifestEntry>> = BTreeMap::new();
        for e in &self.entries {
            out.entry(e.checkpoint()).or_default().push(e);
        }
        out
    }

    pub fn categories(&self) -> Vec<Category> {
        let mut cats: Vec<Category> = self.entries.iter().map(|e| e.category).collect();
        cats.sort();
        cats.dedup();
        cats
    }

    pub fn to_json_string(&self) -> String {
        let value = serde_json::json!({ "entries": self.entries });
        let mut s = serde_json::to_string_pretty(&value).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_json_string())
    }
}

fn find_pre<'a>(entries: &'a [ManifestEntry], post: &ManifestEntry) -> Option<&'a ManifestEntry> {
    let pres = || entries.iter().filter(|e| e.role == Role::Pre && e.layer == post.layer);
    pres()
        .find(|e| e.category == post.category && e.setting == post.setting && e.dataset == post.dataset)
        .or_else(|| pres().find(|e| e.dataset == post.dataset))
        .or_else(|| pres().next())
}

fn validate(entries: &[ManifestEntry]) -> Result<(), ManifestError> {
    let mut seen = HashSet::new();
    for e in entries {
        if !seen.insert((&e.layer, e.role, e.category, &e.setting, &e.dataset)) {
            return Err(ManifestError::Duplicate {
                layer: e.layer.clone(),
                role: e.role,
                category: e.category,
                setting: e.setting.clone(),
                dataset: e.dataset.clone(),
            });
        }
    }
    for e in entries.iter().filter(|e| e.role == Role::Post) {
        if find_pre(entries, e).is_none() {
            return Err(ManifestError::MissingPre {
                layer: e.layer.clone(),
                category: e.category,
                setting: e.setting.clone(),
                dataset: e.dataset.clone(),
            });
        }
    }
    Ok(())
}

/// Reads and validates a manifest file.
pub fn load_manifest(path: &Path) -> Result<CheckpointManifest, ManifestError> {
    let src = std::fs::read_to_string(path).map_err(|source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    CheckpointManifest::from_json_str(&src, base)
}
