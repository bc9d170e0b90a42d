//! Per-block pipelines over a worker pool, and weak-scaling benchmarks.

mod executor;
mod scaling;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub use executor::{Executor, ThreadPoolExecutor};
pub use scaling::{benchmark_scaling, scaling_grid, ScalingOptions, ScalingReport, ScalingRow};

use crate::classify::{classify_regions, coincidence_analysis, CoincidenceFlag, SvmModel};
use crate::error::{Error, Result};
use crate::segmentation::{segment_block, LabelVolume, RegionRecord, SegParams};
use crate::volume::{parse_block_file_name, read_block, GridPos, VolumeBlock, ACTIVITY_CHANNEL, NUCLEAR_CHANNEL};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Segment,
    Classify,
    Coincidence,
}

#[derive(Clone, Debug)]
pub enum BlockSource {
    Memory(Arc<VolumeBlock>),
    File(PathBuf),
}

impl BlockSource {
    pub fn load(&self) -> Result<Arc<VolumeBlock>> {
        match self {
            BlockSource::Memory(b) => Ok(Arc::clone(b)),
            BlockSource::File(p) => Ok(Arc::new(read_block(p)?)),
        }
    }
}

impl From<VolumeBlock> for BlockSource {
    fn from(b: VolumeBlock) -> Self {
        BlockSource::Memory(Arc::new(b))
    }
}

#[derive(Clone, Debug)]
pub struct BlockTask {
    pub pos: GridPos,
    pub nuclear: BlockSource,
    pub activity: Option<BlockSource>,
}

#[derive(Clone, Debug)]
pub struct BatchJob {
    pub dataset: String,
    pub tasks: Vec<BlockTask>,
    pub stages: Vec<Stage>,
    pub workers: usize,
    pub seed: u64,
    pub params: SegParams,
    pub model: Option<Arc<SvmModel>>,
    pub coincidence_threshold: f64,
}

impl BatchJob {
    /// Segmentation-only job with default parameters.
    pub fn segment(dataset: impl Into<String>, tasks: Vec<BlockTask>, workers: usize, seed: u64) -> Self {
        BatchJob {
            dataset: dataset.into(),
            tasks,
            stages: vec![Stage::Segment],
            workers,
            seed,
            params: SegParams::default(),
            model: None,
            coincidence_threshold: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(Error::invalid("worker count must be at least 1"));
        }
        let mut seen = BTreeSet::new();
        if let Some(t) = self.tasks.iter().find(|t| !seen.insert(t.pos)) {
            return Err(Error::invalid(format!("block {} listed twice", t.pos)));
        }
        let stages: BTreeSet<Stage> = self.stages.iter().copied().collect();
        if !stages.contains(&Stage::Segment) {
            return Err(Error::invalid("every pipeline starts with the segment stage"));
        }
        if stages.contains(&Stage::Classify) && self.model.is_none() {
            return Err(Error::invalid("the classify stage needs a model"));
        }
        if stages.contains(&Stage::Coincidence) {
            if !stages.contains(&Stage::Classify) {
                return Err(Error::invalid("the coincidence stage needs classified regions"));
            }
            if !self.coincidence_threshold.is_finite() {
                return Err(Error::invalid("coincidence threshold must be finite"));
            }
        }
        self.params.validate()
    }

    fn has(&self, stage: Stage) -> bool {
        self.stages.contains(&stage)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockResult {
    pub pos: GridPos,
    pub labels: LabelVolume,
    pub regions: Vec<RegionRecord>,
    pub coincidence: Vec<CoincidenceFlag>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockFailure {
    pub pos: GridPos,
    pub error: String,
}

#[derive(Clone, Debug)]
pub struct BatchOutput {
    pub results: BTreeMap<GridPos, BlockResult>,
    pub failures: Vec<BlockFailure>,
    pub workers: usize,
    pub wall: Duration,
}

fn process(job: &BatchJob, task: &BlockTask) -> Result<BlockResult> {
    let block = task.nuclear.load()?;
    if block.grid_pos != task.pos {
        return Err(Error::invalid(format!(
            "block file holds {} but was listed as {}",
            block.grid_pos, task.pos
        )));
    }
    let (labels, mut regions) = segment_block(&block, &job.params)?;
    if job.has(Stage::Classify) {
        classify_regions(job.model.as_deref().expect("validated"), &mut regions)?;
    }
    let mut coincidence = Vec::new();
    if job.has(Stage::Coincidence) {
        let source = task
            .activity
            .as_ref()
            .ok_or_else(|| Error::invalid(format!("block {} has no activity channel", task.pos)))?;
        coincidence = coincidence_analysis(&regions, &labels, &*source.load()?, job.coincidence_threshold)?;
    }
    Ok(BlockResult {
        pos: task.pos,
        labels,
        regions,
        coincidence,
    })
}

/// Runs `job` on a thread pool of `job.workers` threads.
pub fn run_batch(job: &BatchJob) -> Result<BatchOutput> {
    run_batch_with(job, &ThreadPoolExecutor::new(job.workers))
}

/// Runs `job` on any executor. Individual block failures are recorded;
/// the job fails only if every block fails.
pub fn run_batch_with<E: Executor>(job: &BatchJob, executor: &E) -> Result<BatchOutput> {
    job.validate()?;
    let start = Instant::now();
    let outcomes = executor.execute(job.tasks.len(), |i| process(job, &job.tasks[i]));
    let wall = start.elapsed();

    let mut results = BTreeMap::new();
    let mut failures = Vec::new();
    for (task, outcome) in job.tasks.iter().zip(outcomes) {
        match outcome {
            Ok(Ok(r)) => {
                results.insert(task.pos, r);
            }
            Ok(Err(e)) => failures.push(BlockFailure { pos: task.pos, error: e.to_string() }),
            Err(panic) => failures.push(BlockFailure { pos: task.pos, error: format!("panic: {panic}") }),
        }
    }
    failures.sort_by_key(|f| f.pos);
    for f in &failures {
        log::warn!("{}: block {} failed: {}", job.dataset, f.pos, f.error);
    }
    if results.is_empty() && !failures.is_empty() {
        return Err(Error::BatchFailed(failures.len()));
    }
    Ok(BatchOutput {
        results,
        failures,
        workers: executor.workers(),
        wall,
    })
}

/// Tasks for every nuclear-channel block file in `dir`, paired with the
/// activity file of the same position when present. Files are only opened
/// by the workers, so unreadable blocks surface as per-block failures.
pub fn scan_block_dir(dir: &Path) -> Result<Vec<BlockTask>> {
    if !dir.is_dir() {
        return Err(Error::not_found(format!("block directory {}", dir.display())));
    }
    let mut nuclear = BTreeMap::new();
    let mut activity = BTreeMap::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        let Some(name) = entry.file_name().to_str().map(str::to_owned) else {
            continue;
        };
        match parse_block_file_name(&name) {
            Some((pos, ch)) if ch == NUCLEAR_CHANNEL => {
                nuclear.insert(pos, entry.path());
            }
            Some((pos, ch)) if ch == ACTIVITY_CHANNEL => {
                activity.insert(pos, entry.path());
            }
            _ => {}
        }
    }
    if nuclear.is_empty() {
        return Err(Error::not_found(format!("no {NUCLEAR_CHANNEL} blocks in {}", dir.display())));
    }
    Ok(nuclear
        .into_iter()
        .map(|(pos, path)| BlockTask {
            pos,
            nuclear: BlockSource::File(path),
            activity: activity.remove(&pos).map(BlockSource::File),
        })
        .collect())
}
