use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{ColumnKind, ColumnSpec, Modality, DATE_COLUMN, PARTICIPANT_COLUMN};
use crate::error::{ForgeError, Result};

pub const MANIFEST_VERSION: u32 = 1;

/// Declares every source file and its columns. Stored as JSON.
///
/// Column names must be unique across sources except for key columns. When
/// two sources declare the same non-key name, [`Manifest::resolve_collisions`]
/// renames each occurrence to `<modality>_<name>` and records it in `rename`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub sources: Vec<SourceSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub name: String,
    pub file: String,
    pub modality: Modality,
    pub columns: Vec<ManifestColumn>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestColumn {
    pub name: String,
    #[serde(default = "default_kind")]
    pub kind: ColumnKind,
    /// Overrides the source modality for this column.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modality: Option<Modality>,
    /// Name the column takes in the merged table.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rename: Option<String>,
}

fn default_kind() -> ColumnKind {
    ColumnKind::Feature
}

impl ManifestColumn {
    pub fn new(name: impl Into<String>, kind: ColumnKind) -> Self {
        ManifestColumn {
            name: name.into(),
            kind,
            modality: None,
            rename: None,
        }
    }

    pub fn key(name: impl Into<String>) -> Self {
        Self::new(name, ColumnKind::Key)
    }

    pub fn output_name(&self) -> &str {
        self.rename.as_deref().unwrap_or(&self.name)
    }
}

impl SourceSpec {
    pub fn modality_of(&self, column: &ManifestColumn) -> Modality {
        column.modality.unwrap_or(self.modality)
    }

    /// Data columns (keys excluded) as they appear in the loaded table.
    pub fn column_specs(&self) -> Vec<ColumnSpec> {
        self.columns
            .iter()
            .filter(|c| c.kind != ColumnKind::Key)
            .map(|c| ColumnSpec::new(c.output_name(), self.modality_of(c), c.kind))
            .collect()
    }

    pub fn key_columns(&self) -> impl Iterator<Item = &ManifestColumn> {
        self.columns.iter().filter(|c| c.kind == ColumnKind::Key)
    }

    /// Key columns that do not survive loading (anything other than
    /// participant id and date, e.g. raw timestamps).
    pub fn redundant_keys(&self) -> Vec<String> {
        self.key_columns()
            .filter(|c| c.name != PARTICIPANT_COLUMN && c.name != DATE_COLUMN)
            .map(|c| c.name.clone())
            .collect()
    }

    pub fn feature_count(&self) -> usize {
        self.columns
            .iter()
            .filter(|c| c.kind != ColumnKind::Key)
            .count()
    }
}

impl Manifest {
    pub fn new(sources: Vec<SourceSpec>) -> Self {
        Manifest {
            version: MANIFEST_VERSION,
            note: None,
            sources,
        }
    }

    pub fn load(path: &Path) -> Result<Manifest> {
        let text = fs::read_to_string(path).map_err(|e| ForgeError::io(path, e))?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| ForgeError::json(path, e))?;
        if manifest.version != MANIFEST_VERSION {
            return Err(ForgeError::Config(format!(
                "manifest version {} not supported (expected {MANIFEST_VERSION})",
                manifest.version
            )));
        }
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| ForgeError::json(path, e))?;
        fs::write(path, text + "\n").map_err(|e| ForgeError::io(path, e))
    }

    pub fn source_path(&self, manifest_dir: &Path, source: &SourceSpec) -> PathBuf {
        manifest_dir.join(&source.file)
    }

    /// Sum of every source's column count, keys included.
    pub fn declared_columns(&self) -> usize {
        self.sources.iter().map(|s| s.columns.len()).sum()
    }

    /// Column count the merge produces: all data columns plus the two keys.
    pub fn merged_columns(&self) -> usize {
        self.sources.iter().map(SourceSpec::feature_count).sum::<usize>() + 2
    }

    /// Renames colliding non-key columns to `<modality>_<name>`. Returns the
    /// applied (source, old name, new name) triples.
    pub fn resolve_collisions(&mut self) -> Vec<(String, String, String)> {
        let mut seen: HashMap<String, usize> = HashMap::new();
        for source in &self.sources {
            for c in source.columns.iter().filter(|c| c.kind != ColumnKind::Key) {
                *seen.entry(c.output_name().to_string()).or_default() += 1;
            }
        }
        let mut renamed = Vec::new();
        for source in &mut self.sources {
            let modality = source.modality;
            for c in source.columns.iter_mut().filter(|c| c.kind != ColumnKind::Key) {
                if seen.get(c.output_name()).copied().unwrap_or(0) > 1 {
                    let old = c.output_name().to_string();
                    let new = format!("{}_{}", c.modality.unwrap_or(modality), old);
                    c.rename = Some(new.clone());
                    renamed.push((source.name.clone(), old, new));
                }
            }
        }
        renamed
    }

    /// Feature-name to modality map over every non-key column.
    pub fn tags(&self) -> BTreeMap<String, Modality> {
        self.sources
            .iter()
            .flat_map(|s| {
                s.columns
                    .iter()
                    .filter(|c| c.kind != ColumnKind::Key)
                    .map(move |c| (c.output_name().to_string(), s.modality_of(c)))
            })
            .collect()
    }

    /// Tags each named column, failing on the first name the manifest does
    /// not declare.
    pub fn tag_columns<S: AsRef<str>>(&self, names: &[S]) -> Result<Vec<Modality>> {
        let tags = self.tags();
        names
            .iter()
            .map(|n| {
                let n = n.as_ref();
                if n == PARTICIPANT_COLUMN || n == DATE_COLUMN {
                    return self
                        .sources
                        .first()
                        .map(|s| s.modality)
                        .ok_or_else(|| ForgeError::Untagged(n.to_string()));
                }
                tags.get(n)
                    .copied()
                    .ok_or_else(|| ForgeError::Untagged(n.to_string()))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn source(name: &str, modality: Modality, cols: &[&str]) -> SourceSpec {
        let mut columns = vec![
            ManifestColumn::key("participant_id"),
            ManifestColumn::key("timestamp"),
            ManifestColumn::key("date"),
        ];
        columns.extend(cols.iter().map(|c| ManifestColumn::new(*c, ColumnKind::Feature)));
        SourceSpec {
            name: name.into(),
            file: format!("{name}.csv"),
            modality,
            columns,
        }
    }

    #[test]
    fn collisions_are_prefixed_with_modality() {
        let mut m = Manifest::new(vec![
            source("hr", Modality::Hr, &["mean", "hr_resting"]),
            source("stress", Modality::StressSensor, &["mean"]),
        ]);
        let renamed = m.resolve_collisions();
        assert_eq!(renamed.len(), 2);
        let names: Vec<String> = m
            .sources
            .iter()
            .flat_map(|s| s.column_specs())
            .map(|c| c.name)
            .collect();
        assert_eq!(names, vec!["hr_mean", "hr_resting", "stress_sensor_mean"]);
    }

    #[test]
    fn tagging_reports_unknown_column() {
        let m = Manifest::new(vec![source("sleep", Modality::Sleep, &["sleep_duration"])]);
        assert_eq!(m.tag_columns(&["sleep_duration"]).unwrap(), vec![Modality::Sleep]);
        let err = m.tag_columns(&["mystery"]).unwrap_err();
        assert!(matches!(err, ForgeError::Untagged(c) if c == "mystery"));
    }

    #[test]
    fn column_arithmetic() {
        let m = Manifest::new(vec![
            source("a", Modality::Weather, &["w1", "w2"]),
            source("b", Modality::Sleep, &["s1"]),
        ]);
        assert_eq!(m.declared_columns(), 9);
        assert_eq!(m.merged_columns(), 5);
        assert_eq!(m.sources[0].redundant_keys(), vec!["timestamp"]);
    }
}
