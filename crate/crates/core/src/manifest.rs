//! Image manifests: JSON lines of `{"id", "path", "label"}`.

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::error::{Error, Result};
use crate::image::{read_image, ImageBuffer, ImageId};

/// Ground truth: one class index, or a set of positive classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Label {
    Single(usize),
    Multi(Vec<usize>),
}

impl Label {
    pub fn single(&self) -> Option<usize> {
        match self {
            Label::Single(c) => Some(*c),
            Label::Multi(_) => None,
        }
    }

    /// Positive classes; a single label is a one-element set.
    pub fn positives(&self) -> Vec<usize> {
        match self {
            Label::Single(c) => vec![*c],
            Label::Multi(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: ImageId,
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
}

/// Entries sorted by id, with paths already resolved.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    entries: Vec<ManifestEntry>,
}

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

impl Manifest {
    /// Sorts by id and rejects duplicates.
    pub fn new(mut entries: Vec<ManifestEntry>) -> Result<Self> {
        entries.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = entries.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(Error::InvalidParameter(format!(
                "duplicate image id in manifest: {}",
                w[0].id
            )));
        }
        Ok(Self { entries })
    }

    /// Reads a JSON-lines manifest. Relative paths are resolved against the
    /// manifest's directory; blank lines are skipped.
    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let mut entries = Vec::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut entry: ManifestEntry = serde_json::from_str(&line)
                .map_err(|e| Error::json(format!("{}:{}", path.display(), n + 1), e))?;
            if entry.path.is_relative() {
                entry.path = base.join(&entry.path);
            }
            entries.push(entry);
        }
        Self::new(entries)
    }

    /// Every PNG/JPEG below `dir`, keyed by its relative path without
    /// extension (`/`-separated). Labels are left empty.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        for item in WalkDir::new(dir).sort_by_file_name() {
            let item = item.map_err(|e| {
                let path = e.path().unwrap_or(dir).to_path_buf();
                Error::io(path, e.into())
            })?;
            let path = item.path();
            let is_image = path
                .extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()));
            if !item.file_type().is_file() || !is_image {
                continue;
            }
            let rel = path.strip_prefix(dir).unwrap_or(path).with_extension("");
            let id = rel
                .components()
                .map(|c| c.as_os_str().to_string_lossy())
                .collect::<Vec<_>>()
                .join("/");
            entries.push(ManifestEntry {
                id: ImageId::new(id)?,
                path: path.to_path_buf(),
                label: None,
            });
        }
        Self::new(entries)
    }

    /// A manifest file, or a directory to scan.
    pub fn open(path: &Path) -> Result<Self> {
        if path.is_dir() {
            Self::from_dir(path)
        } else {
            Self::load(path)
        }
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        for entry in &self.entries {
            let line = serde_json::to_string(entry).map_err(|e| Error::json("manifest entry", e))?;
            writeln!(out, "{line}").map_err(|e| Error::io("<manifest>", e))?;
        }
        Ok(())
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> Vec<ImageId> {
        self.entries.iter().map(|e| e.id.clone()).collect()
    }

    pub fn get(&self, id: &ImageId) -> Option<&ManifestEntry> {
        self.entries
            .binary_search_by(|e| e.id.cmp(id))
            .ok()
            .map(|i| &self.entries[i])
    }

    pub fn load_image(&self, id: &ImageId) -> Result<ImageBuffer> {
        let entry = self
            .get(id)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown image id {id}")))?;
        read_image(&entry.path)
    }

    /// `(id, label)` pairs; errors if any entry lacks a label.
    pub fn labels(&self) -> Result<Vec<(ImageId, Label)>> {
        let missing: BTreeSet<&str> = self
            .entries
            .iter()
            .filter(|e| e.label.is_none())
            .map(|e| e.id.as_str())
            .collect();
        if !missing.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "manifest entries without labels: {:?}",
                missing.into_iter().take(10).collect::<Vec<_>>()
            )));
        }
        Ok(self
            .entries
            .iter()
            .map(|e| (e.id.clone(), e.label.clone().expect("checked above")))
            .collect())
    }
}

/// `root/<id>.png`, the output location for a transformed image.
pub fn output_path(root: &Path, id: &ImageId) -> PathBuf {
    let mut path = root.to_path_buf();
    for part in id.as_str().split('/') {
        path.push(part);
    }
    let name = format!(
        "{}.png",
        path.file_name().map(|n| n.to_string_lossy()).unwrap_or_default()
    );
    path.set_file_name(name);
    path
}
