use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AtStage, KSelection, PipelineError, RunConfig, RunResult, Stage, StageError};
use crate::cluster::ClusterAssignment;
use crate::store::{create_artifact_dir, short_digest, write_atomic};

pub const CONFIG_FILE: &str = "config.json";
pub const CLUSTERS_FILE: &str = "clusters.json";
pub const VIZ3D_FILE: &str = "viz3d.csv";
pub const LOG_FILE: &str = "log.txt";

/// On-disk form of `clusters.json`. Holds no run id or timestamp, so equal
/// configs produce byte-equal files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClustersFile {
    pub n_clusters: usize,
    pub labels: Vec<usize>,
    pub inertia: f64,
    pub ids: Vec<String>,
    pub members: Vec<Vec<String>>,
    pub cluster_sizes: Vec<usize>,
    pub feature_width: usize,
    pub k_selection: KSelection,
    pub repaired_edges: usize,
}

/// CSV with header `id,x,y,z,cluster`; floats in shortest round-trip form.
pub fn viz3d_csv(ids: &[String], viz3d: &[[f64; 3]], labels: &[usize]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["id", "x", "y", "z", "cluster"]).expect("in-memory write");
    for ((id, p), l) in ids.iter().zip(viz3d).zip(labels) {
        w.write_record([id.clone(), p[0].to_string(), p[1].to_string(), p[2].to_string(), l.to_string()])
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> StageError + '_ {
    move |source| StageError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn corrupt(path: &Path, message: impl ToString) -> StageError {
    StageError::Corrupt {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

/// Writes the run directory; `clusters.json` goes last, by rename. Returns
/// the run id.
pub fn persist_run(runs_root: &Path, r: &RunResult) -> Result<String, PipelineError> {
    let write = || -> Result<String, StageError> {
        let config = serde_json::to_vec_pretty(&r.config).expect("config serializes");
        let (id, dir) = create_artifact_dir(runs_root, &short_digest(&config)).map_err(io(runs_root))?;
        let clusters = ClustersFile {
            n_clusters: r.assignment.n_clusters,
            labels: r.assignment.labels.clone(),
            inertia: r.assignment.inertia,
            ids: r.ids.clone(),
            members: r.members.clone(),
            cluster_sizes: r.assignment.cluster_sizes(),
            feature_width: r.feature_width,
            k_selection: r.k_selection.clone(),
            repaired_edges: r.repaired_edges,
        };
        let mut log = r.log.join("\n");
        log.push('\n');
        let clusters = serde_json::to_vec_pretty(&clusters).expect("clusters serialize");
        for (name, bytes) in [
            (CONFIG_FILE, config.as_slice()),
            (VIZ3D_FILE, viz3d_csv(&r.ids, &r.viz3d, &r.assignment.labels).as_bytes()),
            (LOG_FILE, log.as_bytes()),
            (CLUSTERS_FILE, clusters.as_slice()),
        ] {
            let path = dir.join(name);
            write_atomic(&path, bytes).map_err(io(&path))?;
        }
        Ok(id)
    };
    write().at(Stage::Persist)
}

fn parse_viz3d(path: &Path, text: &str) -> Result<Vec<[f64; 3]>, StageError> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| corrupt(path, e))?;
        let mut p = [0.0; 3];
        for (i, v) in p.iter_mut().enumerate() {
            *v = rec
                .get(i + 1)
                .ok_or_else(|| corrupt(path, "short row"))?
                .parse()
                .map_err(|e| corrupt(path, e))?;
        }
        out.push(p);
    }
    Ok(out)
}

/// Reloads a persisted run; equal to the `RunResult` that was written.
pub fn load_run(dir: &Path) -> Result<RunResult, PipelineError> {
    let read = || -> Result<RunResult, StageError> {
        let text = |name: &str| {
            let p = dir.join(name);
            std::fs::read_to_string(&p).map_err(io(&p))
        };
        let config: RunConfig =
            serde_json::from_str(&text(CONFIG_FILE)?).map_err(|e| corrupt(&dir.join(CONFIG_FILE), e))?;
        let c: ClustersFile =
            serde_json::from_str(&text(CLUSTERS_FILE)?).map_err(|e| corrupt(&dir.join(CLUSTERS_FILE), e))?;
        let viz3d = parse_viz3d(&dir.join(VIZ3D_FILE), &text(VIZ3D_FILE)?)?;
        if viz3d.len() != c.ids.len() {
            return Err(corrupt(&dir.join(VIZ3D_FILE), "row count differs from clusters.json"));
        }
        let log = text(LOG_FILE)?.lines().map(str::to_string).collect();
        let run_id = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        Ok(RunResult {
            run_id,
            config,
            ids: c.ids,
            assignment: ClusterAssignment {
                n_clusters: c.n_clusters,
                labels: c.labels,
                inertia: c.inertia,
            },
            members: c.members,
            viz3d,
            feature_width: c.feature_width,
            k_selection: c.k_selection,
            repaired_edges: c.repaired_edges,
            log,
        })
    };
    read().at(Stage::Load)
}
