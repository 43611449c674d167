use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::frame::Label;
use crate::error::{Error, Result};

pub const MANIFEST_HEADER: &str = "iipad-manifest v1";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub subject_id: String,
    pub session: String,
    pub label: Label,
    /// Frame directory, relative to the manifest's directory.
    pub path: PathBuf,
}

impl ManifestEntry {
    /// Stable identifier used for cache file names.
    pub fn key(&self) -> String {
        self.path
            .to_string_lossy()
            .chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                    c
                } else {
                    '_'
                }
            })
            .collect()
    }
}

/// Tab-separated list of labeled frame directories; subjects are the unit
/// of cross-validation splitting.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetManifest {
    pub version: String,
    pub entries: Vec<ManifestEntry>,
    /// Directory against which entry paths resolve.
    pub root: PathBuf,
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>, root: impl Into<PathBuf>) -> Self {
        DatasetManifest {
            version: "v1".to_string(),
            entries,
            root: root.into(),
        }
    }

    pub fn parse(text: &str, root: impl Into<PathBuf>, origin: &Path) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim_end() == MANIFEST_HEADER => {}
            _ => {
                return Err(Error::format(
                    origin,
                    format!("missing `{MANIFEST_HEADER}` header"),
                ))
            }
        }
        let mut entries = Vec::new();
        for (n, line) in lines.enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(Error::format(
                    origin,
                    format!(
                        "line {}: expected 4 tab-separated fields, got {}",
                        n + 2,
                        fields.len()
                    ),
                ));
            }
            let label = fields[2]
                .parse::<Label>()
                .map_err(|e| Error::format(origin, format!("line {}: {e}", n + 2)))?;
            if fields[0].is_empty() {
                return Err(Error::format(
                    origin,
                    format!("line {}: empty subject id", n + 2),
                ));
            }
            entries.push(ManifestEntry {
                subject_id: fields[0].to_string(),
                session: fields[1].to_string(),
                label,
                path: PathBuf::from(fields[3]),
            });
        }
        Ok(DatasetManifest {
            version: "v1".to_string(),
            entries,
            root: root.into(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        DatasetManifest::parse(&text, root, path)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(MANIFEST_HEADER);
        out.push('\n');
        for e in &self.entries {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}",
                e.subject_id,
                e.session,
                e.label,
                e.path.to_string_lossy().replace('\\', "/")
            );
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        self.root.join(&entry.path)
    }

    /// Distinct subject ids in sorted order.
    pub fn subjects(&self) -> Vec<String> {
        self.entries
            .iter()
            .map(|e| e.subject_id.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }
}
