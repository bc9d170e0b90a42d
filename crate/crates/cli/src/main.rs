//! `neurovol`: one binary for the whole pipeline.
//!
//! A synthetic run goes `gen-phantom → segment → stitch → ingest → serve`.

mod commands;
mod config;

use std::net::IpAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use neurovol::store::ExportFormat;

use crate::config::PipelineConfig;

#[derive(Debug, Parser)]
#[command(name = "neurovol", version, about = "Batch segmentation, stitching and serving of gridded microscopy volumes")]
pub struct Cli {
    /// Pipeline configuration (JSON, as written by --dump-config).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Print the effective configuration and exit.
    #[arg(long, global = true)]
    dump_config: bool,

    /// Machine-readable output.
    #[arg(long, global = true)]
    json: bool,

    #[arg(long, global = true)]
    seed: Option<u64>,

    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic tile grid with known nuclei.
    GenPhantom(GenPhantomArgs),
    /// Segment every nuclear block in a directory.
    Segment(SegmentArgs),
    /// Train, cross-validate or retrain the neuron/glia classifier.
    #[command(subcommand)]
    Classify(ClassifyCommand),
    /// Estimate overlaps and merge a tile grid.
    Stitch(StitchArgs),
    /// Write stitched volumes, labels and centroids into a store.
    Ingest(IngestArgs),
    /// Serve a store over HTTP.
    Serve(ServeArgs),
    /// Weak-scaling benchmark of the batch runner.
    Bench(BenchArgs),
    /// Export an annotation layer.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
pub struct GenPhantomArgs {
    /// Directory for the block files; also sets the config block directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    pub rows: usize,
    #[arg(long, default_value_t = 2)]
    pub cols: usize,
    /// Block edge length in voxels (cubic blocks).
    #[arg(long, default_value_t = 64)]
    pub extent: usize,
    #[arg(long, default_value_t = 6)]
    pub overlap_x: usize,
    #[arg(long, default_value_t = 5)]
    pub overlap_y: usize,
    #[arg(long, default_value_t = 6)]
    pub nuclei: usize,
    /// Noise standard deviation as a fraction of the dynamic range.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 4.0)]
    pub min_radius: f64,
    #[arg(long, default_value_t = 6.0)]
    pub max_radius: f64,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[arg(long)]
    pub block_dir: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Classify regions with this model file, and flag active neurons
    /// when activity blocks are present.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub sigma1: Option<f64>,
    #[arg(long)]
    pub sigma2: Option<f64>,
    #[arg(long)]
    pub threshold: Option<f32>,
    #[arg(long)]
    pub min_voxels: Option<usize>,
    #[arg(long)]
    pub activity_threshold: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum ClassifyCommand {
    /// Fit a model and write it as a model file.
    Train(TrainArgs),
    /// Stratified k-fold cross-validation.
    Cv(CvArgs),
    /// Retrain from the reviewed annotations of a stored dataset.
    Retrain(RetrainArgs),
}

#[derive(Debug, Args)]
pub struct ExampleSource {
    /// Use the two-Gaussian synthetic set.
    #[arg(long, conflicts_with_all = ["examples", "truth"])]
    pub synthetic: bool,
    /// JSON array of `{features, class}` objects.
    #[arg(long, conflicts_with = "truth")]
    pub examples: Option<PathBuf>,
    /// Phantom truth; labels the regions of --regions by nearest nucleus.
    #[arg(long, requires = "regions")]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub regions: Option<PathBuf>,
    #[arg(long)]
    pub c: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub source: ExampleSource,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub source: ExampleSource,
    #[arg(long)]
    pub folds: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RetrainArgs {
    #[arg(long)]
    pub root: Option<PathBuf>,
    #[arg(long)]
    pub dataset: String,
    #[arg(long, default_value = "centroids")]
    pub layer: String,
    #[arg(long)]
    pub c: Option<f64>,
}

#[derive(Debug, Args)]
pub struct StitchArgs {
    #[arg(long)]
    pub block_dir: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output of `segment`; its labels and regions are stitched too.
    #[arg(long)]
    pub segmentation: Option<PathBuf>,
    #[arg(long)]
    pub max_frac: Option<f64>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub root: Option<PathBuf>,
    #[arg(long)]
    pub dataset: String,
    /// Output directory of `stitch`.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Additional block files to ingest as channels.
    #[arg(long = "volume")]
    pub volumes: Vec<PathBuf>,
    #[arg(long, default_value_t = 64)]
    pub chunk: usize,
    #[arg(long, default_value_t = 3)]
    pub scales: usize,
    /// Annotation block edge length.
    #[arg(long, default_value_t = 64)]
    pub ann_block: usize,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = neurovol_serve::STORE_ROOT_ENV)]
    pub root: Option<PathBuf>,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: IpAddr,
    /// Serve only these datasets.
    #[arg(long = "dataset")]
    pub datasets: Vec<String>,
    #[arg(long = "cors-origin", default_value = "*")]
    pub cors_origins: Vec<String>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "1,25,100")]
    pub counts: Vec<usize>,
    #[arg(long, default_value_t = 64)]
    pub extent: usize,
    #[arg(long, default_value_t = 3)]
    pub runs: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub root: Option<PathBuf>,
    #[arg(long)]
    pub dataset: String,
    #[arg(long, default_value = "centroids")]
    pub layer: String,
    #[arg(long, default_value = "json")]
    pub format: ExportFormat,
    /// Revision number; head when absent.
    #[arg(long)]
    pub rev: Option<u64>,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Bad invocation: missing paths or flags. Exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Some(cmd) = &cli.command {
        commands::apply_overrides(cmd, &mut cfg);
    }
    if cli.dump_config {
        print!("{}", cfg.to_json());
        return Ok(());
    }
    let Some(cmd) = cli.command else {
        return Err(UsageError("no subcommand given; see --help".into()).into());
    };
    let report = commands::execute(cmd, &cfg, cli.json)?;
    if cli.json {
        if !report.json.is_null() {
            println!("{}", serde_json::to_string_pretty(&report.json)?);
        }
    } else if !report.text.is_empty() {
        print!("{}", report.text);
    }
    Ok(())
}
