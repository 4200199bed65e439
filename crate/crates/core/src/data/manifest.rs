use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{gatr, AttributionRecord, DataError, ImageRecord, Label, RgbImage};

pub const HEADER: [&str; 4] = ["id", "image", "attribution", "label"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    /// Image path, resolved against the manifest root.
    pub image: PathBuf,
    pub attribution: Option<PathBuf>,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub root_dir: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    pub fn has_attributions(&self) -> bool {
        self.entries.iter().all(|e| e.attribution.is_some())
    }
}

impl ManifestEntry {
    pub fn load_image(&self) -> Result<ImageRecord, DataError> {
        let image = RgbImage::load_png(&self.image)?;
        Ok(ImageRecord {
            id: self.id.clone(),
            label: self.label,
            image,
        })
    }

    /// `Ok(None)` when the entry has no attribution file.
    pub fn load_attribution(&self) -> Result<Option<AttributionRecord>, DataError> {
        let Some(path) = &self.attribution else {
            return Ok(None);
        };
        let grid = gatr::read_attribution_grid(path)?;
        Ok(Some(AttributionRecord {
            image_id: self.id.clone(),
            grid,
        }))
    }
}

/// Loads a manifest whose relative paths resolve against the manifest's
/// own directory.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest, DataError> {
    let root = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    load_manifest_with_root(path, &root)
}

pub fn load_manifest_with_root(path: &Path, root: &Path) -> Result<DatasetManifest, DataError> {
    let bytes = std::fs::read(path).map_err(|e| DataError::io(path, e))?;
    parse_manifest(&bytes, root)
}

pub fn parse_manifest(bytes: &[u8], root: &Path) -> Result<DatasetManifest, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(bytes);

    let header = reader.headers().map_err(|e| DataError::MalformedRow {
        row: 0,
        reason: e.to_string(),
    })?;
    if header.iter().ne(HEADER.iter().copied()) {
        return Err(DataError::BadHeader(header.iter().collect::<Vec<_>>().join(",")));
    }

    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| DataError::MalformedRow {
            row,
            reason: e.to_string(),
        })?;
        if record.len() != HEADER.len() {
            return Err(DataError::MalformedRow {
                row,
                reason: format!("expected {} fields, found {}", HEADER.len(), record.len()),
            });
        }
        let id = record[0].to_string();
        if id.is_empty() {
            return Err(DataError::MalformedRow {
                row,
                reason: "empty id".into(),
            });
        }
        if record[1].is_empty() {
            return Err(DataError::MalformedRow {
                row,
                reason: "empty image path".into(),
            });
        }
        let label: Label = record[3].parse().map_err(|_| DataError::UnknownLabel {
            row,
            token: record[3].to_string(),
        })?;
        if !seen.insert(id.clone()) {
            return Err(DataError::DuplicateId { row, id });
        }
        let image = resolve(root, &record[1], row)?;
        let attribution = match &record[2] {
            "" => None,
            p => Some(resolve(root, p, row)?),
        };
        entries.push(ManifestEntry {
            id,
            image,
            attribution,
            label,
        });
    }
    Ok(DatasetManifest {
        root_dir: root.to_path_buf(),
        entries,
    })
}

fn resolve(root: &Path, rel: &str, row: usize) -> Result<PathBuf, DataError> {
    let path = root.join(rel);
    if !path.is_file() {
        return Err(DataError::MissingFile { row, path });
    }
    Ok(path)
}

/// Serializes entries back to manifest CSV with paths relative to `root`
/// where possible.
pub fn write_manifest(manifest: &DatasetManifest, path: &Path) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let rel = |p: &Path| {
        p.strip_prefix(&manifest.root_dir)
            .unwrap_or(p)
            .to_string_lossy()
            .into_owned()
    };
    w.write_record(HEADER).map_err(csv_io)?;
    for e in &manifest.entries {
        let attr = e.attribution.as_deref().map(rel).unwrap_or_default();
        w.write_record([e.id.as_str(), &rel(&e.image), &attr, e.label.as_str()])
            .map_err(csv_io)?;
    }
    let bytes = w.into_inner().map_err(|e| csv_io(e.into_error().into()))?;
    std::fs::write(path, bytes).map_err(|e| DataError::io(path, e))
}

fn csv_io(e: csv::Error) -> DataError {
    DataError::MalformedRow {
        row: 0,
        reason: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn fixture(rows: &str) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        for name in ["a.png", "b.png", "c.png", "a.gatr"] {
            fs::write(dir.path().join(name), b"x").unwrap();
        }
        let path = dir.path().join("manifest.csv");
        fs::write(&path, format!("id,image,attribution,label\n{rows}")).unwrap();
        (dir, path)
    }

    #[test]
    fn two_rows_in_file_order() {
        let (dir, path) = fixture("b,b.png,,malignant\na,a.png,a.gatr,benign\n");
        let m = load_manifest(&path).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.entries[0].id, "b");
        assert_eq!(m.entries[0].label, Label::Malignant);
        assert_eq!(m.entries[0].attribution, None);
        assert_eq!(m.entries[1].id, "a");
        assert_eq!(m.entries[1].attribution, Some(dir.path().join("a.gatr")));
        assert!(!m.has_attributions());
    }

    #[test]
    fn header_only_is_empty() {
        let (_dir, path) = fixture("");
        assert!(load_manifest(&path).unwrap().is_empty());
    }

    #[test]
    fn display_abbreviation_is_not_a_label() {
        let (_dir, path) = fixture("a,a.png,,benign\nb,b.png,,Mal\n");
        match load_manifest(&path) {
            Err(DataError::UnknownLabel { row, token }) => {
                assert_eq!(row, 2);
                assert_eq!(token, "Mal");
            }
            other => panic!("expected unknown label, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_id() {
        let (_dir, path) = fixture("a,a.png,,benign\na,b.png,,benign\n");
        assert!(matches!(
            load_manifest(&path),
            Err(DataError::DuplicateId { row: 2, .. })
        ));
    }

    #[test]
    fn malformed_row_reports_row() {
        let (_dir, path) = fixture("a,a.png,,benign\nb,b.png\n");
        assert!(matches!(
            load_manifest(&path),
            Err(DataError::MalformedRow { row: 2, .. })
        ));
    }

    #[test]
    fn missing_manifest_and_missing_image() {
        assert!(matches!(
            load_manifest(Path::new("/nonexistent/m.csv")),
            Err(DataError::Io { .. })
        ));
        let (_dir, path) = fixture("a,zzz.png,,benign\n");
        assert!(matches!(
            load_manifest(&path),
            Err(DataError::MissingFile { row: 1, .. })
        ));
    }

    #[test]
    fn wrong_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        fs::write(&path, "id,path,label\n").unwrap();
        assert!(matches!(load_manifest(&path), Err(DataError::BadHeader(_))));
    }

    #[test]
    fn write_then_load() {
        let (_dir, path) = fixture("c,c.png,,unlabeled\na,a.png,a.gatr,benign\n");
        let m = load_manifest(&path).unwrap();
        let out = path.with_file_name("copy.csv");
        write_manifest(&m, &out).unwrap();
        assert_eq!(load_manifest(&out).unwrap(), m);
    }
}
