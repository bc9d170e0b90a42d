mod classify;
mod pipeline;
mod service;

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::config::PipelineConfig;
use crate::{ClassifyCommand, Command, UsageError};

/// What a subcommand prints: `text` normally, `json` under `--json`.
pub struct Report {
    pub text: String,
    pub json: Value,
}

impl Report {
    pub fn new(text: impl Into<String>, json: impl Serialize) -> Self {
        Report {
            text: text.into(),
            json: serde_json::to_value(json).expect("report serializes"),
        }
    }
}

/// Copies per-subcommand flags into the shared configuration.
pub fn apply_overrides(cmd: &Command, cfg: &mut PipelineConfig) {
    fn set<T: Clone>(slot: &mut T, v: &Option<T>) {
        if let Some(v) = v {
            *slot = v.clone();
        }
    }
    fn set_path(slot: &mut Option<PathBuf>, v: &Option<PathBuf>) {
        if v.is_some() {
            *slot = v.clone();
        }
    }
    match cmd {
        Command::GenPhantom(a) => set_path(&mut cfg.paths.block_dir, &a.out),
        Command::Segment(a) => {
            set_path(&mut cfg.paths.block_dir, &a.block_dir);
            set_path(&mut cfg.paths.output_dir, &a.out);
            let p = &mut cfg.segmentation;
            set(&mut p.sigma1, &a.sigma1);
            set(&mut p.sigma2, &a.sigma2);
            set(&mut p.seed_threshold, &a.threshold);
            set(&mut p.min_region_voxels, &a.min_voxels);
            set(&mut cfg.activity_threshold, &a.activity_threshold);
        }
        Command::Classify(ClassifyCommand::Train(a)) => set(&mut cfg.svm.c, &a.source.c),
        Command::Classify(ClassifyCommand::Cv(a)) => {
            set(&mut cfg.svm.c, &a.source.c);
            set(&mut cfg.svm.folds, &a.folds);
        }
        Command::Classify(ClassifyCommand::Retrain(a)) => {
            set_path(&mut cfg.paths.store_root, &a.root);
            set(&mut cfg.svm.c, &a.c);
        }
        Command::Stitch(a) => {
            set_path(&mut cfg.paths.block_dir, &a.block_dir);
            set_path(&mut cfg.paths.output_dir, &a.out);
            set(&mut cfg.stitch.max_frac, &a.max_frac);
        }
        Command::Ingest(a) => set_path(&mut cfg.paths.store_root, &a.root),
        Command::Serve(a) => set_path(&mut cfg.paths.store_root, &a.root),
        Command::Export(a) => set_path(&mut cfg.paths.store_root, &a.root),
        Command::Bench(_) => {}
    }
}

pub fn execute(cmd: Command, cfg: &PipelineConfig, json: bool) -> anyhow::Result<Report> {
    if cfg.workers == 0 {
        return Err(UsageError("--workers must be at least 1".into()).into());
    }
    match cmd {
        Command::GenPhantom(a) => pipeline::gen_phantom(&a, cfg),
        Command::Segment(a) => pipeline::segment(&a, cfg),
        Command::Stitch(a) => pipeline::stitch(&a, cfg),
        Command::Ingest(a) => pipeline::ingest(&a, cfg),
        Command::Classify(c) => classify::run(c, cfg),
        Command::Serve(a) => service::serve(&a, cfg, json),
        Command::Bench(a) => service::bench(&a, cfg),
        Command::Export(a) => service::export(&a, cfg),
    }
}

fn required<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, UsageError> {
    path.as_deref().ok_or_else(|| UsageError(format!("{flag} is required (flag or config)")))
}

/// An input directory that must already exist.
fn input_dir<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, UsageError> {
    let p = required(path, flag)?;
    if p.is_dir() {
        Ok(p)
    } else {
        Err(UsageError(format!("{flag}: no such directory {}", p.display())))
    }
}

fn input_file(p: &Path) -> Result<&Path, UsageError> {
    if p.is_file() {
        Ok(p)
    } else {
        Err(UsageError(format!("no such file {}", p.display())))
    }
}

fn output_dir<'a>(path: &'a Option<PathBuf>, flag: &str) -> anyhow::Result<&'a Path> {
    let p = required(path, flag)?;
    std::fs::create_dir_all(p)?;
    Ok(p)
}

fn open_store(cfg: &PipelineConfig) -> anyhow::Result<neurovol::Store> {
    let root = input_dir(&cfg.paths.store_root, "--root")?;
    Ok(neurovol::Store::open(root)?)
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(input_file(path)?)?;
    serde_json::from_str(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
}
