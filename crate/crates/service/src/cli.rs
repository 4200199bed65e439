use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use gebi_core::biasgen::{apply_bias, BiasKind, BiasSpec, FrameShape};
use gebi_core::counterfactual::{
    execute_experiment, load_experiment, render_table, ExperimentRequest, PredictorRef, Statistic, TableRow, ToyWeights,
};
use gebi_core::data::load_manifest;
use gebi_core::pipeline::{execute_run, load_run, RunConfig, CLUSTERS_FILE};

#[derive(Debug, Parser)]
#[command(name = "gebi", version, about = "Find and test bias-causing artifacts in image datasets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, clap::Args)]
pub struct BiasArgs {
    /// black_frame, ruler, red_circle or none.
    #[arg(long, value_parser = parse_kind)]
    pub bias: BiasKind,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_parser = parse_shape, default_value = "rect")]
    pub frame_shape: FrameShape,
    #[arg(long)]
    pub frame_thickness_frac: Option<f64>,
    /// JSON file with a complete bias spec; overrides the flags above.
    #[arg(long)]
    pub spec: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Execute a pipeline run described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "runs")]
        runs_dir: PathBuf,
    },
    /// Write artifact-inserted copies of every manifest image.
    InsertBias {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        bias: BiasArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Counterfactual experiment: score images before and after insertion.
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        bias: BiasArgs,
        /// `builtin` for the closed-form toy scorer, or an http(s) endpoint.
        #[arg(long, default_value = "builtin")]
        predictor: String,
        /// Remote predictor timeout in seconds.
        #[arg(long, default_value_t = 30.0)]
        timeout: f64,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long, default_value = "experiments")]
        experiments_dir: PathBuf,
        /// Worker threads; 0 uses every core.
        #[arg(long, default_value_t = 0)]
        parallelism: usize,
        /// Print signed rather than absolute means in the table.
        #[arg(long)]
        signed: bool,
    },
    /// Render persisted runs and experiments as text.
    Report {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        #[arg(long)]
        signed: bool,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "data")]
        data_root: PathBuf,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
}

fn parse_kind(s: &str) -> Result<BiasKind, String> {
    s.parse().map_err(|e: gebi_core::biasgen::BiasError| e.to_string())
}

fn parse_shape(s: &str) -> Result<FrameShape, String> {
    match s {
        "rect" => Ok(FrameShape::Rect),
        "round" => Ok(FrameShape::Round),
        _ => Err(format!("unknown frame shape `{s}` (expected rect or round)")),
    }
}

/// A failed command: the stage that failed and why.
#[derive(Debug)]
pub struct CliError {
    pub stage: String,
    pub message: String,
}

impl CliError {
    fn new(stage: &str, message: impl ToString) -> Self {
        Self {
            stage: stage.to_string(),
            message: message.to_string(),
        }
    }
}

type CliResult = Result<String, CliError>;

impl BiasArgs {
    fn spec(&self) -> Result<BiasSpec, CliError> {
        let spec = match &self.spec {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::new("config", format!("{}: {e}", p.display())))?;
                serde_json::from_str(&text).map_err(|e| CliError::new("config", format!("{}: {e}", p.display())))?
            }
            None => {
                let mut s = BiasSpec::new(self.bias, self.seed);
                s.frame_shape = self.frame_shape;
                if let Some(f) = self.frame_thickness_frac {
                    s.frame_thickness_frac = f;
                }
                s
            }
        };
        spec.validate().map_err(|e| CliError::new("config", e))?;
        Ok(spec)
    }
}

fn predictor_ref(s: &str, timeout: f64) -> Result<PredictorRef, CliError> {
    match s {
        "builtin" | "builtin_toy" => Ok(PredictorRef::BuiltinToy {
            weights: ToyWeights::default(),
        }),
        url if url.starts_with("http://") || url.starts_with("https://") => Ok(PredictorRef::Remote {
            endpoint: url.to_string(),
            timeout,
        }),
        other => Err(CliError::new(
            "config",
            format!("unknown predictor `{other}` (expected builtin or an http(s) URL)"),
        )),
    }
}

/// Executes a parsed command and returns what it prints on stdout.
pub fn dispatch(cli: Cli) -> CliResult {
    match cli.command {
        Command::Run { config, runs_dir } => run(&config, &runs_dir),
        Command::InsertBias { manifest, bias, out } => insert_bias(&manifest, &bias.spec()?, &out),
        Command::Evaluate {
            manifest,
            bias,
            predictor,
            timeout,
            threshold,
            experiments_dir,
            parallelism,
            signed,
        } => {
            let req = ExperimentRequest {
                manifest,
                bias_spec: bias.spec()?,
                predictor: predictor_ref(&predictor, timeout)?,
                threshold,
            };
            let (id, exp) = execute_experiment(&req, &experiments_dir, parallelism)
                .map_err(|e| CliError::new("evaluate", e))?;
            log::info!("experiment written to {}", experiments_dir.join(&id).display());
            let mut out = serde_json::to_string_pretty(&exp.report).expect("report serializes");
            out.push_str("\n\n");
            let stat = if signed { Statistic::Signed } else { Statistic::Absolute };
            out.push_str(&render_table(
                &[TableRow {
                    feature: req.bias_spec.kind.display_name(),
                    report: &exp.report,
                }],
                stat,
            ));
            Ok(out)
        }
        Command::Report { dirs, signed } => report(&dirs, if signed { Statistic::Signed } else { Statistic::Absolute }),
        Command::Serve { .. } => unreachable!("serve is handled by the binary"),
    }
}

fn run(config: &Path, runs_dir: &Path) -> CliResult {
    let text = std::fs::read_to_string(config).map_err(|e| CliError::new("config", format!("{}: {e}", config.display())))?;
    let cfg: RunConfig =
        serde_json::from_str(&text).map_err(|e| CliError::new("config", format!("{}: {e}", config.display())))?;
    let r = execute_run(&cfg, runs_dir).map_err(|e| CliError::new(e.stage.as_str(), e.source))?;
    Ok(format!("{}\n", runs_dir.join(&r.run_id).display()))
}

fn insert_bias(manifest: &Path, spec: &BiasSpec, out: &Path) -> CliResult {
    let m = load_manifest(manifest).map_err(|e| CliError::new("load", e))?;
    std::fs::create_dir_all(out).map_err(|e| CliError::new("insert_bias", format!("{}: {e}", out.display())))?;
    let mut listing = String::new();
    for entry in &m.entries {
        let rec = entry.load_image().map_err(|e| CliError::new("load", e))?;
        let biased = apply_bias(&rec.image, spec, &rec.id).map_err(|e| CliError::new("insert_bias", format!("{}: {e}", rec.id)))?;
        let stem = entry.image.file_stem().map_or_else(|| rec.id.clone(), |s| s.to_string_lossy().into_owned());
        let path = out.join(format!("{stem}_biased.png"));
        biased.save_png(&path).map_err(|e| CliError::new("insert_bias", e))?;
        let _ = writeln!(listing, "{}", path.display());
    }
    Ok(listing)
}

fn run_summary(dir: &Path, out: &mut String) -> Result<(), CliError> {
    let r = load_run(dir).map_err(|e| CliError::new(e.stage.as_str(), e.source))?;
    let c = &r.config;
    let _ = writeln!(out, "run {}", r.run_id);
    let _ = writeln!(
        out,
        "mode {}, class {}, {} samples, feature width {}, k = {}",
        serde_json::to_value(c.mode).expect("mode serializes").as_str().unwrap_or_default(),
        c.class_filter,
        r.ids.len(),
        r.feature_width,
        r.assignment.n_clusters,
    );
    for (i, members) in r.members.iter().enumerate() {
        let _ = writeln!(out, "cluster {i}: {} samples", members.len());
        if !members.is_empty() {
            let _ = writeln!(out, "  {}", members.join(" "));
        }
    }
    Ok(())
}

/// Runs are summarized in argument order; experiments are gathered into
/// one table printed last.
fn report(dirs: &[PathBuf], stat: Statistic) -> CliResult {
    let mut out = String::new();
    let mut experiments = Vec::new();
    for dir in dirs {
        if dir.join(CLUSTERS_FILE).is_file() {
            run_summary(dir, &mut out)?;
            out.push('\n');
        } else if dir.join("report.json").is_file() {
            experiments.push(load_experiment(dir).map_err(|e| CliError::new("load", e))?);
        } else {
            return Err(CliError::new(
                "load",
                format!("{} is neither a completed run nor an experiment", dir.display()),
            ));
        }
    }
    if !experiments.is_empty() {
        let rows: Vec<TableRow> = experiments
            .iter()
            .map(|e| TableRow {
                feature: e.request.bias_spec.kind.display_name(),
                report: &e.report,
            })
            .collect();
        out.push_str(&render_table(&rows, stat));
    }
    Ok(out)
}
