//! Counterfactual bias testing: score images before and after artifact
//! insertion and aggregate the prediction deltas per class.

mod predictor;
mod report;

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::biasgen::{apply_bias, BiasError, BiasSpec};
use crate::data::{load_manifest, DataError, DatasetManifest, Label};

pub use predictor::{
    sigmoid, toy_ring_thickness, BuiltinToy, PredictError, Predictor, PredictorRef, RemotePredictor, ToyWeights,
};
pub use report::{
    deltas_csv, load_experiment, persist_experiment, render_table, ExperimentFiles, Statistic, TableRow,
};

#[derive(Debug, Error)]
pub enum CounterfactualError {
    #[error("threshold must lie in (0, 1), got {0}")]
    InvalidThreshold(f64),
    #[error("no labeled deltas to summarize")]
    Empty,
    #[error("sample {sample_id}: {source}")]
    Predict {
        sample_id: String,
        #[source]
        source: PredictError,
    },
    #[error(transparent)]
    Predictor(#[from] PredictError),
    #[error("sample {sample_id}: {source}")]
    Bias {
        sample_id: String,
        #[source]
        source: BiasError,
    },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Corrupt { path: PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionDelta {
    pub sample_id: String,
    pub label: Label,
    pub p_before: f64,
    pub p_after: f64,
    pub delta_pp: f64,
    pub flipped_to_malignant: bool,
    pub flipped_to_benign: bool,
}

impl PredictionDelta {
    pub fn new(sample_id: impl Into<String>, label: Label, p_before: f64, p_after: f64, threshold: f64) -> Self {
        Self {
            sample_id: sample_id.into(),
            label,
            p_before,
            p_after,
            delta_pp: 100.0 * (p_after - p_before),
            flipped_to_malignant: p_before < threshold && threshold <= p_after,
            flipped_to_benign: p_after < threshold && threshold <= p_before,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub n: usize,
    pub mean_signed_pp: f64,
    pub mean_abs_pp: f64,
    pub max_abs_pp: f64,
    pub flips_to_malignant: usize,
    pub flips_to_benign: usize,
}

impl ClassStats {
    fn fold<'a>(deltas: impl Iterator<Item = &'a PredictionDelta>) -> Option<Self> {
        let mut s = ClassStats {
            n: 0,
            mean_signed_pp: 0.0,
            mean_abs_pp: 0.0,
            max_abs_pp: 0.0,
            flips_to_malignant: 0,
            flips_to_benign: 0,
        };
        for d in deltas {
            s.n += 1;
            s.mean_signed_pp += d.delta_pp;
            s.mean_abs_pp += d.delta_pp.abs();
            s.max_abs_pp = s.max_abs_pp.max(d.delta_pp.abs());
            s.flips_to_malignant += d.flipped_to_malignant as usize;
            s.flips_to_benign += d.flipped_to_benign as usize;
        }
        if s.n == 0 {
            return None;
        }
        s.mean_signed_pp /= s.n as f64;
        s.mean_abs_pp /= s.n as f64;
        Some(s)
    }

    pub fn flip_rate_to_malignant(&self) -> f64 {
        self.flips_to_malignant as f64 / self.n as f64
    }
}

/// Per-class aggregates of one experiment. `pooled` covers both labeled
/// classes together; unlabeled samples are only counted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualReport {
    pub threshold: f64,
    pub malignant: Option<ClassStats>,
    pub benign: Option<ClassStats>,
    pub pooled: ClassStats,
    pub n_unlabeled: usize,
    pub bias_spec: Option<BiasSpec>,
}

impl CounterfactualReport {
    pub fn class(&self, label: Label) -> Option<&ClassStats> {
        match label {
            Label::Malignant => self.malignant.as_ref(),
            Label::Benign => self.benign.as_ref(),
            Label::Unlabeled => None,
        }
    }
}

fn check_threshold(threshold: f64) -> Result<(), CounterfactualError> {
    if threshold > 0.0 && threshold < 1.0 {
        Ok(())
    } else {
        Err(CounterfactualError::InvalidThreshold(threshold))
    }
}

/// Aggregates in sample-id order, so any permutation of `deltas` yields an
/// identical report.
pub fn summarize(deltas: &[PredictionDelta], threshold: f64) -> Result<CounterfactualReport, CounterfactualError> {
    check_threshold(threshold)?;
    let mut sorted: Vec<&PredictionDelta> = deltas.iter().collect();
    sorted.sort_by(|a, b| {
        a.sample_id
            .cmp(&b.sample_id)
            .then(a.p_before.total_cmp(&b.p_before))
            .then(a.p_after.total_cmp(&b.p_after))
    });
    let of = |l: Label| ClassStats::fold(sorted.iter().copied().filter(move |d| d.label == l));
    let pooled = ClassStats::fold(sorted.iter().copied().filter(|d| d.label != Label::Unlabeled))
        .ok_or(CounterfactualError::Empty)?;
    Ok(CounterfactualReport {
        threshold,
        malignant: of(Label::Malignant),
        benign: of(Label::Benign),
        pooled,
        n_unlabeled: sorted.iter().filter(|d| d.label == Label::Unlabeled).count(),
        bias_spec: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub threshold: f64,
    /// Worker threads for per-sample prediction; 0 uses every core.
    pub parallelism: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            parallelism: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    /// Sorted by sample id; includes unlabeled samples.
    pub deltas: Vec<PredictionDelta>,
    pub report: CounterfactualReport,
}

fn score_sample(
    entry: &crate::data::ManifestEntry,
    spec: &BiasSpec,
    predictor: &dyn Predictor,
    threshold: f64,
) -> Result<PredictionDelta, CounterfactualError> {
    let record = entry.load_image()?;
    let biased = apply_bias(&record.image, spec, &record.id).map_err(|source| CounterfactualError::Bias {
        sample_id: record.id.clone(),
        source,
    })?;
    let predict = |img| {
        predictor.predict(img).map_err(|source| CounterfactualError::Predict {
            sample_id: record.id.clone(),
            source,
        })
    };
    let before = predict(&record.image)?;
    let after = predict(&biased)?;
    Ok(PredictionDelta::new(record.id.clone(), record.label, before, after, threshold))
}

/// Scores every manifest sample before and after `spec`. The first failure
/// aborts the experiment and discards all partial results.
pub fn run_experiment(
    manifest: &DatasetManifest,
    spec: &BiasSpec,
    predictor: &dyn Predictor,
    cfg: &ExperimentConfig,
) -> Result<Experiment, CounterfactualError> {
    check_threshold(cfg.threshold)?;
    spec.validate().map_err(|source| CounterfactualError::Bias {
        sample_id: String::new(),
        source,
    })?;
    let work = || -> Result<Vec<PredictionDelta>, CounterfactualError> {
        manifest
            .entries
            .par_iter()
            .map(|e| score_sample(e, spec, predictor, cfg.threshold))
            .collect()
    };
    let mut deltas = if cfg.parallelism == 0 {
        work()?
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.parallelism)
            .build()
            .expect("thread pool")
            .install(work)?
    };
    deltas.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    let mut report = summarize(&deltas, cfg.threshold)?;
    report.bias_spec = Some(spec.clone());
    Ok(Experiment { deltas, report })
}

/// A fully specified experiment as submitted by clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRequest {
    pub manifest: PathBuf,
    pub bias_spec: BiasSpec,
    #[serde(default)]
    pub predictor: PredictorRef,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

fn default_threshold() -> f64 {
    0.5
}

/// Loads, runs and persists `req` under `experiments_root`. Returns the
/// experiment id and its outcome.
pub fn execute_experiment(
    req: &ExperimentRequest,
    experiments_root: &Path,
    parallelism: usize,
) -> Result<(String, Experiment), CounterfactualError> {
    let manifest = load_manifest(&req.manifest)?;
    let predictor = req.predictor.build()?;
    let cfg = ExperimentConfig {
        threshold: req.threshold,
        parallelism,
    };
    let exp = run_experiment(&manifest, &req.bias_spec, predictor.as_ref(), &cfg)?;
    let id = persist_experiment(experiments_root, req, &exp)?;
    Ok((id, exp))
}
