//! Records, dataset manifests and the attribution grid codec.

pub mod gatr;
mod manifest;
mod raster;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use manifest::{
    load_manifest, load_manifest_with_root, parse_manifest, write_manifest, DatasetManifest,
    ManifestEntry,
};
pub use raster::{luma, Grid, RgbImage};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest header must be `id,image,attribution,label`, found `{0}`")]
    BadHeader(String),
    #[error("manifest row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },
    #[error("manifest row {row}: unknown label `{token}` (expected benign, malignant or unlabeled)")]
    UnknownLabel { row: usize, token: String },
    #[error("manifest row {row}: duplicate id `{id}`")]
    DuplicateId { row: usize, id: String },
    #[error("manifest row {row}: file not found: {path}")]
    MissingFile { row: usize, path: PathBuf },
    #[error("not a GATR file (bad magic)")]
    BadMagic,
    #[error("unsupported GATR version {0}")]
    UnsupportedVersion(u8),
    #[error("truncated GATR payload: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("raster has zero size")]
    EmptyRaster,
    #[error("expected {expected} values, found {actual}")]
    ShapeMismatch { expected: usize, actual: usize },
    #[error("pixel value {value} at index {index} outside [0, 1]")]
    PixelOutOfRange { index: usize, value: f64 },
    #[error("image codec: {0}")]
    Image(#[from] image::ImageError),
}

impl DataError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Benign,
    Malignant,
    Unlabeled,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Benign => "benign",
            Label::Malignant => "malignant",
            Label::Unlabeled => "unlabeled",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
#[error("unknown label `{0}`")]
pub struct UnknownLabel(pub String);

impl FromStr for Label {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "benign" => Ok(Label::Benign),
            "malignant" => Ok(Label::Malignant),
            "unlabeled" => Ok(Label::Unlabeled),
            other => Err(UnknownLabel(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub id: String,
    pub label: Label,
    pub image: RgbImage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributionRecord {
    pub image_id: String,
    pub grid: Grid,
}
