use std::path::{Path, PathBuf};

use anyhow::Context;
use neurovol::classify::{DEFAULT_C, DEFAULT_FOLDS};
use neurovol::stitching::DEFAULT_MAX_FRAC;
use neurovol::SegParams;
use serde::{Deserialize, Serialize};

pub const DEFAULT_SEED: u64 = 0;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub block_dir: Option<PathBuf>,
    pub store_root: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmConfig {
    pub c: f64,
    pub folds: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig { c: DEFAULT_C, folds: DEFAULT_FOLDS }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StitchConfig {
    pub max_frac: f64,
}

impl Default for StitchConfig {
    fn default() -> Self {
        StitchConfig { max_frac: DEFAULT_MAX_FRAC }
    }
}

/// Everything a run depends on besides its input files. `--dump-config`
/// prints this after flags are applied, and `--config` reads it back.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub segmentation: SegParams,
    /// Mean activity-channel intensity above which a neuron counts as active.
    pub activity_threshold: f64,
    pub svm: SvmConfig,
    pub stitch: StitchConfig,
    pub workers: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            paths: Paths::default(),
            segmentation: SegParams::default(),
            activity_threshold: 600.0,
            svm: SvmConfig::default(),
            stitch: StitchConfig::default(),
            workers: default_workers(),
            seed: DEFAULT_SEED,
        }
    }
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get()).min(8)
}

impl PipelineConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip() {
        let mut c = PipelineConfig::default();
        c.paths.block_dir = Some("blocks".into());
        c.segmentation.sigma1 = 1.5;
        c.seed = 9;
        let back: PipelineConfig = serde_json::from_str(&c.to_json()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_documents_fill_defaults() {
        let c: PipelineConfig = serde_json::from_str(r#"{"seed": 3}"#).unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.svm, SvmConfig::default());
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"sed": 3}"#).is_err());
    }
}
