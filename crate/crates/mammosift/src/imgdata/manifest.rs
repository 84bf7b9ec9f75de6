//! Dataset manifest: one JSON file describing repeated train/validation/test
//! splits over a set of images. Relative paths inside the manifest resolve
//! against the manifest's own directory, so datasets are relocatable.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};

/// Role of an image within one split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FoldRole {
    Train,
    Validation,
    Test,
}

impl std::fmt::Display for FoldRole {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FoldRole::Train => "train",
            FoldRole::Validation => "validation",
            FoldRole::Test => "test",
        })
    }
}

/// One image reference within one split, with resolved paths.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub image_path: PathBuf,
    pub annotation_path: Option<PathBuf>,
    pub split_id: u32,
    pub fold_role: FoldRole,
}

impl ManifestEntry {
    /// File stem of the image, used to key per-image output files.
    pub fn stem(&self) -> String {
        self.image_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    }
}

/// One repeat of the train/validation/test partition.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestSplit {
    pub id: u32,
    pub entries: Vec<ManifestEntry>,
}

/// Parsed and validated dataset manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    /// Isotropic physical pixel size of the source images, in millimetres.
    pub pixel_size_mm: f64,
    pub splits: Vec<ManifestSplit>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestDoc {
    pixel_size_mm: f64,
    splits: Vec<SplitDoc>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SplitDoc {
    id: u32,
    entries: Vec<EntryDoc>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EntryDoc {
    image: PathBuf,
    #[serde(default)]
    annotation: Option<PathBuf>,
    role: FoldRole,
}

impl DatasetManifest {
    /// Loads and fully validates a manifest. Either every entry validates
    /// or a positioned error is returned — no partial datasets.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut de = serde_json::Deserializer::from_slice(&bytes);
        let doc: ManifestDoc = serde_path_to_error::deserialize(&mut de).map_err(|e| {
            Error::Schema {
                path: path.to_path_buf(),
                detail: format!("{}: {}", e.path(), e.inner()),
            }
        })?;
        let schema_err = |detail: String| Error::Schema { path: path.to_path_buf(), detail };

        if !(doc.pixel_size_mm.is_finite() && doc.pixel_size_mm > 0.0) {
            return Err(schema_err(format!(
                "pixel_size_mm: must be a positive finite number, got {}",
                doc.pixel_size_mm
            )));
        }
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };

        let mut seen_ids = BTreeSet::new();
        let mut splits = Vec::with_capacity(doc.splits.len());
        for (si, split) in doc.splits.iter().enumerate() {
            if !seen_ids.insert(split.id) {
                return Err(schema_err(format!("splits[{si}]: duplicate split id {}", split.id)));
            }
            let mut seen_images = BTreeSet::new();
            let mut seen_stems = BTreeSet::new();
            let mut entries = Vec::with_capacity(split.entries.len());
            for (ei, entry) in split.entries.iter().enumerate() {
                if !seen_images.insert(entry.image.clone()) {
                    return Err(schema_err(format!(
                        "splits[{si}].entries[{ei}]: duplicate image {}",
                        entry.image.display()
                    )));
                }
                let resolved = ManifestEntry {
                    image_path: resolve(&entry.image),
                    annotation_path: entry.annotation.as_deref().map(resolve),
                    split_id: split.id,
                    fold_role: entry.role,
                };
                // Per-image outputs are keyed by stem, so stems must be
                // unique within a split even when full paths differ.
                if resolved.stem().is_empty() || !seen_stems.insert(resolved.stem()) {
                    return Err(schema_err(format!(
                        "splits[{si}].entries[{ei}]: image stem {:?} is empty or not unique \
                         within the split",
                        resolved.stem()
                    )));
                }
                entries.push(resolved);
            }
            splits.push(ManifestSplit { id: split.id, entries });
        }
        Ok(DatasetManifest { pixel_size_mm: doc.pixel_size_mm, splits })
    }

    /// All entries across all splits, in manifest order.
    pub fn entries(&self) -> impl Iterator<Item = &ManifestEntry> {
        self.splits.iter().flat_map(|s| s.entries.iter())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_manifest(dir: &Path, body: &str) -> PathBuf {
        let path = dir.join("manifest.json");
        fs::write(&path, body).unwrap();
        path
    }

    const VALID: &str = r#"{
        "pixel_size_mm": 0.07,
        "splits": [
            {"id": 0, "entries": [
                {"image": "a.png", "annotation": "a.json", "role": "train"},
                {"image": "sub/b.png", "annotation": null, "role": "test"}
            ]},
            {"id": 1, "entries": [
                {"image": "a.png", "role": "validation"}
            ]}
        ]
    }"#;

    #[test]
    fn valid_manifest_resolves_paths_against_its_directory() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_manifest(dir.path(), VALID);
        let m = DatasetManifest::load(&path).unwrap();
        assert_eq!(m.pixel_size_mm, 0.07);
        assert_eq!(m.splits.len(), 2);
        assert_eq!(m.splits[0].entries[0].image_path, dir.path().join("a.png"));
        assert_eq!(
            m.splits[0].entries[0].annotation_path,
            Some(dir.path().join("a.json"))
        );
        assert_eq!(m.splits[0].entries[1].annotation_path, None);
        assert_eq!(m.splits[0].entries[1].stem(), "b");
        assert_eq!(m.splits[1].entries[0].split_id, 1);
        assert_eq!(m.splits[1].entries[0].fold_role, FoldRole::Validation);
        assert_eq!(m.entries().count(), 3);
    }

    #[test]
    fn duplicate_image_within_split_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let body = r#"{"pixel_size_mm": 0.07, "splits": [{"id": 0, "entries": [
            {"image": "a.png", "role": "train"},
            {"image": "a.png", "role": "test"}
        ]}]}"#;
        let path = write_manifest(dir.path(), body);
        match DatasetManifest::load(&path).unwrap_err() {
            Error::Schema { detail, .. } => {
                assert!(detail.contains("splits[0].entries[1]"), "positioned: {detail}")
            }
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn colliding_stems_across_directories_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let body = r#"{"pixel_size_mm": 0.07, "splits": [{"id": 0, "entries": [
            {"image": "x/a.png", "role": "train"},
            {"image": "y/a.png", "role": "test"}
        ]}]}"#;
        let path = write_manifest(dir.path(), body);
        assert!(matches!(DatasetManifest::load(&path), Err(Error::Schema { .. })));
    }

    #[test]
    fn unknown_fields_and_bad_roles_yield_positioned_errors() {
        let dir = tempfile::tempdir().unwrap();
        for body in [
            r#"{"pixel_size_mm": 0.07, "splits": [], "extra": 1}"#,
            r#"{"pixel_size_mm": 0.07, "splits": [{"id": 0, "entries": [
                {"image": "a.png", "role": "holdout"}
            ]}]}"#,
            r#"{"pixel_size_mm": 0.07, "splits": [{"id": -1, "entries": []}]}"#,
        ] {
            let path = write_manifest(dir.path(), body);
            let err = DatasetManifest::load(&path).unwrap_err();
            assert!(matches!(err, Error::Schema { .. }), "body {body}: got {err:?}");
        }
    }

    #[test]
    fn nonpositive_pixel_size_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_manifest(dir.path(), r#"{"pixel_size_mm": 0.0, "splits": []}"#);
        assert!(matches!(DatasetManifest::load(&path), Err(Error::Schema { .. })));
    }

    #[test]
    fn duplicate_split_ids_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let body = r#"{"pixel_size_mm": 0.07, "splits": [
            {"id": 3, "entries": []}, {"id": 3, "entries": []}
        ]}"#;
        let path = write_manifest(dir.path(), body);
        assert!(matches!(DatasetManifest::load(&path), Err(Error::Schema { .. })));
    }

    #[test]
    fn missing_manifest_is_an_io_error() {
        let err = DatasetManifest::load(Path::new("/no/such/manifest.json")).unwrap_err();
        assert_eq!(err.kind(), crate::error::ErrorKind::Io);
    }
}
