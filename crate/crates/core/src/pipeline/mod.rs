//! End-to-end runs: select, preprocess, reduce, concatenate, cluster,
//! embed in 3D and persist.

mod persist;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::{
    eigengap_analysis, elbow_select_k, median_heuristic_gamma, ClusterAssignment, ClusterError, ClusterMethod,
    Clusterer, EigengapResult, ElbowResult, KMeans, Spectral,
};
use crate::data::{load_manifest, DataError, DatasetManifest, Grid, Label, ManifestEntry, RgbImage};
use crate::manifold::{isomap, IsomapParams, ManifoldError, Repair};
use crate::preprocess::{preprocess_attribution, preprocess_image, PreprocessConfig, PreprocessError, Resample};

pub use persist::{load_run, persist_run, viz3d_csv, ClustersFile, CLUSTERS_FILE, CONFIG_FILE, LOG_FILE, VIZ3D_FILE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Config,
    Load,
    SelectSamples,
    Preprocess,
    ReduceFeatures,
    ConcatFeatures,
    Cluster,
    Viz3d,
    Persist,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Load => "load",
            Stage::SelectSamples => "select_samples",
            Stage::Preprocess => "preprocess",
            Stage::ReduceFeatures => "reduce_features",
            Stage::ConcatFeatures => "concat_features",
            Stage::Cluster => "cluster",
            Stage::Viz3d => "viz3d",
            Stage::Persist => "persist",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum StageError {
    #[error("invalid run config: {0}")]
    InvalidConfig(String),
    #[error("no samples match class filter `{0}`")]
    NoSamples(ClassFilter),
    #[error("sample {0} has no attribution map")]
    MissingAttribution(String),
    #[error("feature blocks have {left} and {right} rows")]
    RowMismatch { left: usize, right: usize },
    #[error("row {row}: image features belong to {left} but attribution features to {right}")]
    IdMisalignment { row: usize, left: String, right: String },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Manifold(#[from] ManifoldError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Corrupt { path: PathBuf, message: String },
}

#[derive(Debug, Error)]
#[error("stage {stage} failed: {source}")]
pub struct PipelineError {
    pub stage: Stage,
    #[source]
    pub source: StageError,
}

trait AtStage<T> {
    fn at(self, stage: Stage) -> Result<T, PipelineError>;
}

impl<T, E: Into<StageError>> AtStage<T> for Result<T, E> {
    fn at(self, stage: Stage) -> Result<T, PipelineError> {
        self.map_err(|e| PipelineError {
            stage,
            source: e.into(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    SprayAttr,
    SprayInput,
    IsomapAttr,
    IsomapInput,
    #[default]
    Gebi,
}

impl Mode {
    pub fn uses_images(self) -> bool {
        matches!(self, Mode::SprayInput | Mode::IsomapInput | Mode::Gebi)
    }

    pub fn uses_attributions(self) -> bool {
        matches!(self, Mode::SprayAttr | Mode::IsomapAttr | Mode::Gebi)
    }
}

/// Single-class selection, or every sample with `All`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ClassFilter {
    Only(Label),
    All,
}

impl fmt::Display for ClassFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClassFilter::Only(l) => f.write_str(l.as_str()),
            ClassFilter::All => f.write_str("all"),
        }
    }
}

impl FromStr for ClassFilter {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "all" {
            return Ok(ClassFilter::All);
        }
        s.parse::<Label>()
            .map(ClassFilter::Only)
            .map_err(|_| format!("unknown class filter `{s}` (expected benign, malignant, unlabeled or all)"))
    }
}

impl TryFrom<String> for ClassFilter {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<ClassFilter> for String {
    fn from(f: ClassFilter) -> String {
        f.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoK {
    Elbow,
    Eigengap,
}

/// A fixed cluster count or an automatic selection rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ClusterCount {
    Fixed(usize),
    Auto(AutoK),
}

impl Default for ClusterCount {
    fn default() -> Self {
        ClusterCount::Auto(AutoK::Elbow)
    }
}

fn default_d_img() -> usize {
    10
}
fn default_d_attr() -> usize {
    20
}
fn default_k_neighbors() -> usize {
    5
}
fn default_k_range() -> [usize; 2] {
    [2, 8]
}
fn default_true() -> bool {
    true
}
fn default_repair() -> Repair {
    Repair::Connect
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Manifest CSV path.
    pub dataset: PathBuf,
    pub class_filter: ClassFilter,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default = "default_d_img")]
    pub d_img: usize,
    #[serde(default = "default_d_attr")]
    pub d_attr: usize,
    #[serde(default = "default_k_neighbors")]
    pub k_neighbors: usize,
    #[serde(default)]
    pub n_clusters: ClusterCount,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub preprocess: PreprocessConfig,
    /// Z-score each modality block before concatenation (gebi only).
    #[serde(default = "default_true")]
    pub standardize: bool,
    #[serde(default = "default_repair")]
    pub repair: Repair,
    #[serde(default)]
    pub method: ClusterMethod,
    /// RBF kernel width for spectral methods; median heuristic when absent.
    #[serde(default)]
    pub gamma: Option<f64>,
    /// Inclusive candidate range for elbow; eigengap inspects up to the upper end.
    #[serde(default = "default_k_range")]
    pub k_range: [usize; 2],
}

impl RunConfig {
    pub fn new(dataset: impl Into<PathBuf>, class_filter: ClassFilter) -> Self {
        Self {
            dataset: dataset.into(),
            class_filter,
            mode: Mode::default(),
            d_img: default_d_img(),
            d_attr: default_d_attr(),
            k_neighbors: default_k_neighbors(),
            n_clusters: ClusterCount::default(),
            seed: 0,
            preprocess: PreprocessConfig::default(),
            standardize: true,
            repair: Repair::Connect,
            method: ClusterMethod::default(),
            gamma: None,
            k_range: default_k_range(),
        }
    }

    pub fn validate(&self) -> Result<(), StageError> {
        let bad = |m: String| Err(StageError::InvalidConfig(m));
        if self.d_img == 0 || self.d_attr == 0 {
            return bad("d_img and d_attr must be positive".into());
        }
        if self.k_neighbors == 0 {
            return bad("k_neighbors must be positive".into());
        }
        if self.n_clusters == ClusterCount::Fixed(0) {
            return bad("n_clusters must be positive".into());
        }
        if let Some(g) = self.gamma {
            if !(g.is_finite() && g > 0.0) {
                return bad(format!("gamma must be positive, got {g}"));
            }
        }
        let [lo, hi] = self.k_range;
        if lo < 2 || hi < lo {
            return bad(format!("k_range [{lo}, {hi}] must satisfy 2 <= lo <= hi"));
        }
        self.preprocess.validate().map_err(StageError::from)
    }
}

/// Row-aligned feature vectors of one modality (or their concatenation).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub ids: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub width: usize,
}

impl FeatureMatrix {
    pub fn new(ids: Vec<String>, rows: Vec<Vec<f64>>) -> Self {
        let width = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == width), "ragged feature matrix");
        assert_eq!(ids.len(), rows.len(), "one id per row");
        Self { ids, rows, width }
    }

    /// Zero-width block over `ids`.
    pub fn empty(ids: Vec<String>) -> Self {
        let rows = vec![Vec::new(); ids.len()];
        Self { ids, rows, width: 0 }
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    /// Columns rescaled to mean 0 and population variance 1; constant
    /// columns become 0.
    pub fn standardized(&self) -> Self {
        let n = self.n().max(1) as f64;
        let mut rows = self.rows.clone();
        for j in 0..self.width {
            let mean = self.rows.iter().map(|r| r[j]).sum::<f64>() / n;
            let var = self.rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            for r in rows.iter_mut() {
                r[j] = if sd > 0.0 { (r[j] - mean) / sd } else { 0.0 };
            }
        }
        Self {
            ids: self.ids.clone(),
            rows,
            width: self.width,
        }
    }
}

/// One selected sample after preprocessing.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSample {
    pub id: String,
    pub label: Label,
    pub image: Option<RgbImage>,
    pub attribution: Option<Grid>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReducedFeatures {
    pub image: Option<FeatureMatrix>,
    pub attribution: Option<FeatureMatrix>,
    /// Edges added to reconnect kNN graphs, over all Isomap fits.
    pub repaired_edges: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "method")]
pub enum KSelection {
    Fixed { k: usize },
    Elbow { k: usize, elbow: ElbowResult },
    Eigengap { k: usize, eigengap: EigengapResult },
}

impl KSelection {
    pub fn k(&self) -> usize {
        match self {
            KSelection::Fixed { k } | KSelection::Elbow { k, .. } | KSelection::Eigengap { k, .. } => *k,
        }
    }

    pub fn eigen_info(&self) -> Option<&EigengapResult> {
        match self {
            KSelection::Eigengap { eigengap, .. } => Some(eigengap),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    /// Directory name under the runs root; empty until persisted.
    pub run_id: String,
    pub config: RunConfig,
    pub ids: Vec<String>,
    pub assignment: ClusterAssignment,
    pub members: Vec<Vec<String>>,
    pub viz3d: Vec<[f64; 3]>,
    pub feature_width: usize,
    pub k_selection: KSelection,
    pub repaired_edges: usize,
    pub log: Vec<String>,
}

fn note(log: &mut Vec<String>, msg: String) {
    log::info!("{msg}");
    log.push(msg);
}

fn warn(log: &mut Vec<String>, msg: String) {
    log::warn!("{msg}");
    log.push(format!("WARNING: {msg}"));
}

pub fn select_samples(manifest: &DatasetManifest, filter: ClassFilter) -> Result<Vec<ManifestEntry>, PipelineError> {
    let out: Vec<ManifestEntry> = manifest
        .entries
        .iter()
        .filter(|e| match filter {
            ClassFilter::All => true,
            ClassFilter::Only(l) => e.label == l,
        })
        .cloned()
        .collect();
    if out.is_empty() {
        return Err(StageError::NoSamples(filter)).at(Stage::SelectSamples);
    }
    Ok(out)
}

/// Loads and normalizes the modalities `mode` needs. Attributions are
/// loaded whenever the entry has one.
pub fn prepare_samples(
    entries: &[ManifestEntry],
    mode: Mode,
    cfg: &PreprocessConfig,
) -> Result<Vec<PreparedSample>, PipelineError> {
    entries
        .par_iter()
        .map(|e| -> Result<PreparedSample, StageError> {
            let image = if mode.uses_images() {
                Some(preprocess_image(&e.load_image()?.image, cfg)?)
            } else {
                None
            };
            let attribution = if mode.uses_attributions() {
                e.load_attribution()?
                    .map(|a| preprocess_attribution(&a.grid, cfg))
                    .transpose()?
            } else {
                None
            };
            Ok(PreparedSample {
                id: e.id.clone(),
                label: e.label,
                image,
                attribution,
            })
        })
        .collect::<Result<Vec<_>, _>>()
        .at(Stage::Preprocess)
}

fn flat_image(img: &RgbImage) -> Vec<f64> {
    (0..3).flat_map(|c| img.channel(c)).map(f64::from).collect()
}

fn flat_grid(g: &Grid) -> Vec<f64> {
    g.values().iter().map(|&v| f64::from(v)).collect()
}

fn isomap_block(
    ids: Vec<String>,
    vectors: Vec<Vec<f64>>,
    dim: usize,
    cfg: &RunConfig,
    repaired: &mut usize,
    log: &mut Vec<String>,
    what: &str,
) -> Result<FeatureMatrix, StageError> {
    let params = IsomapParams {
        k: cfg.k_neighbors,
        dim,
        repair: cfg.repair,
    };
    let out = isomap(&vectors, &params)?;
    if !out.repaired.is_empty() {
        warn(log, format!("{what} kNN graph was disconnected; added {} bridging edges", out.repaired.len()));
    }
    *repaired += out.repaired.len();
    Ok(FeatureMatrix::new(ids, out.embedding.rows()))
}

pub fn reduce_features(
    samples: &[PreparedSample],
    cfg: &RunConfig,
    log: &mut Vec<String>,
) -> Result<ReducedFeatures, PipelineError> {
    let ids: Vec<String> = samples.iter().map(|s| s.id.clone()).collect();
    let images = || -> Vec<&RgbImage> {
        samples
            .iter()
            .map(|s| s.image.as_ref().expect("images prepared for this mode"))
            .collect()
    };
    let attributions = || -> Result<Vec<&Grid>, StageError> {
        samples
            .iter()
            .map(|s| {
                s.attribution
                    .as_ref()
                    .ok_or_else(|| StageError::MissingAttribution(s.id.clone()))
            })
            .collect()
    };
    let side = cfg.preprocess.downsample_side;
    let mut repaired = 0;
    let mut run = || -> Result<ReducedFeatures, StageError> {
        let (image, attribution) = match cfg.mode {
            Mode::SprayAttr => {
                let rows = attributions()?
                    .into_iter()
                    .map(|g| g.flatten_downsized(side))
                    .collect::<Result<_, _>>()?;
                (None, Some(FeatureMatrix::new(ids.clone(), rows)))
            }
            Mode::SprayInput => {
                let rows = images()
                    .into_iter()
                    .map(|i| i.flatten_downsized(side))
                    .collect::<Result<_, _>>()?;
                (Some(FeatureMatrix::new(ids.clone(), rows)), None)
            }
            Mode::IsomapAttr | Mode::IsomapInput | Mode::Gebi => {
                let attr = if cfg.mode.uses_attributions() {
                    let vectors = attributions()?.into_iter().map(flat_grid).collect();
                    Some(isomap_block(ids.clone(), vectors, cfg.d_attr, cfg, &mut repaired, log, "attribution")?)
                } else {
                    None
                };
                let img = if cfg.mode.uses_images() {
                    let vectors = images().into_iter().map(flat_image).collect();
                    Some(isomap_block(ids.clone(), vectors, cfg.d_img, cfg, &mut repaired, log, "image")?)
                } else {
                    None
                };
                (img, attr)
            }
        };
        Ok(ReducedFeatures {
            image,
            attribution,
            repaired_edges: 0,
        })
    };
    let mut out = run().at(Stage::ReduceFeatures)?;
    out.repaired_edges = repaired;
    Ok(out)
}

/// Row-wise concatenation `[image | attribution]`, checked by sample id.
pub fn concat_features(img: &FeatureMatrix, attr: &FeatureMatrix) -> Result<FeatureMatrix, PipelineError> {
    let check = || -> Result<FeatureMatrix, StageError> {
        if img.n() != attr.n() {
            return Err(StageError::RowMismatch {
                left: img.n(),
                right: attr.n(),
            });
        }
        for (row, (a, b)) in img.ids.iter().zip(&attr.ids).enumerate() {
            if a != b {
                return Err(StageError::IdMisalignment {
                    row,
                    left: a.clone(),
                    right: b.clone(),
                });
            }
        }
        let rows = img
            .rows
            .iter()
            .zip(&attr.rows)
            .map(|(a, b)| a.iter().chain(b).copied().collect())
            .collect();
        Ok(FeatureMatrix {
            ids: img.ids.clone(),
            rows,
            width: img.width + attr.width,
        })
    };
    check().at(Stage::ConcatFeatures)
}

/// The matrix handed to clustering for `cfg.mode`.
pub fn clustering_input(reduced: &ReducedFeatures, cfg: &RunConfig) -> Result<FeatureMatrix, PipelineError> {
    match (&reduced.image, &reduced.attribution) {
        (Some(i), Some(a)) => {
            if cfg.standardize {
                concat_features(&i.standardized(), &a.standardized())
            } else {
                concat_features(i, a)
            }
        }
        (Some(m), None) | (None, Some(m)) => Ok(m.clone()),
        (None, None) => Err(StageError::InvalidConfig("mode produced no features".into())).at(Stage::ConcatFeatures),
    }
}

fn resolve_k(features: &FeatureMatrix, cfg: &RunConfig, log: &mut Vec<String>) -> Result<KSelection, ClusterError> {
    let n = features.n();
    let [lo, hi] = cfg.k_range;
    let hi = hi.min(n.saturating_sub(1));
    Ok(match cfg.n_clusters {
        ClusterCount::Fixed(k) => KSelection::Fixed { k },
        ClusterCount::Auto(AutoK::Elbow) => {
            let elbow = elbow_select_k(&features.rows, lo, hi, cfg.seed)?;
            note(log, format!("elbow selected k={} (knee strength {:.3})", elbow.k, elbow.knee_strength));
            KSelection::Elbow { k: elbow.k, elbow }
        }
        ClusterCount::Auto(AutoK::Eigengap) => {
            let gamma = cfg.gamma.unwrap_or_else(|| median_heuristic_gamma(&features.rows));
            let eigengap = eigengap_analysis(&features.rows, gamma, hi)?;
            note(log, format!("eigengap suggested k={}", eigengap.suggested));
            KSelection::Eigengap {
                k: eigengap.suggested,
                eigengap,
            }
        }
    })
}

fn cluster_features(
    features: &FeatureMatrix,
    cfg: &RunConfig,
    log: &mut Vec<String>,
) -> Result<(KSelection, ClusterAssignment), PipelineError> {
    let run = |log: &mut Vec<String>| -> Result<_, ClusterError> {
        let sel = resolve_k(features, cfg, log)?;
        let clusterer: Box<dyn Clusterer> = match cfg.method {
            ClusterMethod::Spectral => Box::new(Spectral { gamma: cfg.gamma }),
            ClusterMethod::Kmeans => Box::new(KMeans::default()),
        };
        let a = clusterer.cluster(&features.rows, sel.k(), cfg.seed)?;
        Ok((sel, a))
    };
    run(log).at(Stage::Cluster)
}

/// Runs every stage in memory. The result is a pure function of the
/// config and the dataset contents.
pub fn compute_run(cfg: &RunConfig) -> Result<RunResult, PipelineError> {
    cfg.validate().at(Stage::Config)?;
    let mut log = Vec::new();
    let manifest = load_manifest(&cfg.dataset).at(Stage::Load)?;
    note(&mut log, format!("loaded {} manifest entries from {}", manifest.len(), cfg.dataset.display()));
    if cfg.class_filter == ClassFilter::All {
        warn(
            &mut log,
            "class filter `all` mixes classes; use it only for artifacts expected across every class".into(),
        );
    }
    let entries = select_samples(&manifest, cfg.class_filter)?;
    note(&mut log, format!("selected {} samples ({})", entries.len(), cfg.class_filter));
    let samples = prepare_samples(&entries, cfg.mode, &cfg.preprocess)?;
    let reduced = reduce_features(&samples, cfg, &mut log)?;
    let features = clustering_input(&reduced, cfg)?;
    note(&mut log, format!("clustering {} x {} feature matrix", features.n(), features.width));
    let (k_selection, assignment) = cluster_features(&features, cfg, &mut log)?;
    let sizes = assignment.cluster_sizes();
    note(&mut log, format!("cluster sizes {sizes:?}"));
    for (c, &s) in sizes.iter().enumerate() {
        if s == 0 {
            warn(&mut log, format!("cluster {c} is empty"));
        }
    }
    let viz_params = IsomapParams {
        k: cfg.k_neighbors.min(features.n().saturating_sub(1)).max(1),
        dim: 3,
        repair: Repair::Connect,
    };
    let viz = isomap(&features.rows, &viz_params).at(Stage::Viz3d)?;
    let viz3d = viz.embedding.rows().into_iter().map(|r| [r[0], r[1], r[2]]).collect();
    let members = assignment.members(&features.ids);
    Ok(RunResult {
        run_id: String::new(),
        config: cfg.clone(),
        ids: features.ids,
        assignment,
        members,
        viz3d,
        feature_width: features.width,
        k_selection,
        repaired_edges: reduced.repaired_edges,
        log,
    })
}

/// Computes and persists a run under `runs_root/<run-id>/`.
pub fn execute_run(cfg: &RunConfig, runs_root: &Path) -> Result<RunResult, PipelineError> {
    let mut result = compute_run(cfg)?;
    result.run_id = persist_run(runs_root, &result)?;
    Ok(result)
}
