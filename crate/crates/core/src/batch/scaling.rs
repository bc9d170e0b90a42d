use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{run_batch, BatchJob, BlockTask};
use crate::error::{Error, Result};
use crate::volume::{generate_phantom, make_grid_layout, voxel_count, PhantomSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub volumes: usize,
    pub voxels: u64,
    pub workers: usize,
    pub wall_s: f64,
    pub voxels_per_s: f64,
    /// `(t_N - t_1) / t_1` in percent; absent without a single-volume row.
    pub overhead_pct: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub rows: Vec<ScalingRow>,
    pub extent: usize,
    pub runs: usize,
    pub seed: u64,
    pub parallelism: usize,
    pub warnings: Vec<String>,
}

impl ScalingReport {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["volumes", "voxels", "workers", "wall_s", "voxels_per_s", "overhead_pct"])?;
        for r in &self.rows {
            w.write_record([
                r.volumes.to_string(),
                r.voxels.to_string(),
                r.workers.to_string(),
                format!("{:.6}", r.wall_s),
                format!("{:.1}", r.voxels_per_s),
                r.overhead_pct.map(|o| format!("{o:.2}")).unwrap_or_default(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("ascii csv"))
    }

    /// Throughput of every row relative to the first, with its time cost.
    pub fn throughput_table(&self) -> String {
        let mut s = String::new();
        let Some(base) = self.rows.first() else {
            return s;
        };
        let _ = writeln!(s, "{:>8} {:>8} {:>12} {:>12} {:>10}", "volumes", "workers", "throughput", "increase", "time");
        for r in &self.rows {
            let ratio = r.voxels_per_s / base.voxels_per_s;
            let time = r.wall_s / base.wall_s;
            let _ = writeln!(
                s,
                "{:>8} {:>8} {:>11.2}x {:>11.0}% {:>+9.1}%",
                r.volumes,
                r.workers,
                ratio,
                (ratio - 1.0) * 100.0,
                (time - 1.0) * 100.0
            );
        }
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingOptions {
    /// Cubic block edge in voxels.
    pub extent: usize,
    pub workers: usize,
    pub seed: u64,
    /// Timed repetitions per row; the median is reported.
    pub runs: usize,
}

impl Default for ScalingOptions {
    fn default() -> Self {
        ScalingOptions {
            extent: 64,
            workers: 1,
            seed: 0,
            runs: 3,
        }
    }
}

/// Most square `rows x cols` grid with `rows * cols == n`, rows ≤ cols.
pub fn scaling_grid(n: usize) -> (usize, usize) {
    let mut rows = 1;
    let mut r = 1;
    while r * r <= n {
        if n.is_multiple_of(r) {
            rows = r;
        }
        r += 1;
    }
    (rows, n / rows.max(1))
}

fn phantom_tasks(n: usize, extent: usize, seed: u64) -> Result<Vec<BlockTask>> {
    let (rows, cols) = scaling_grid(n);
    let scale = extent as f64 / 64.0;
    let r0 = (extent as f64 / 16.0).max(1.5);
    let spec = PhantomSpec {
        grid: make_grid_layout(rows, cols, true)?,
        block_extents: [extent; 3],
        true_overlap_x: (extent / 10).max(1),
        true_overlap_y: (extent / 10).max(1),
        nuclei_per_block: ((6.0 * scale.powi(3)).round() as usize).max(1),
        radius_range: (r0, 1.5 * r0),
        noise_sigma: 0.02 * PhantomSpec::default().dynamic_range(),
        ..PhantomSpec::default()
    };
    Ok(generate_phantom(&spec, seed)?
        .tiles
        .into_iter()
        .map(|t| BlockTask {
            pos: t.pos,
            nuclear: t.nuclear.into(),
            activity: None,
        })
        .collect())
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Times segmentation of `n` phantom volumes on `min(workers, n)` workers
/// for every `n` in `counts`.
pub fn benchmark_scaling(counts: &[usize], opts: ScalingOptions) -> Result<ScalingReport> {
    if counts.is_empty() || counts.contains(&0) {
        return Err(Error::invalid("volume counts must be positive"));
    }
    if opts.workers == 0 || opts.runs == 0 {
        return Err(Error::invalid("workers and runs must be positive"));
    }
    if opts.extent < 16 {
        return Err(Error::invalid("benchmark blocks need an extent of at least 16"));
    }
    let parallelism = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut warnings = Vec::new();
    if opts.workers > parallelism {
        warnings.push(format!(
            "{} workers requested but only {parallelism} hardware threads are available",
            opts.workers
        ));
    }

    let mut rows = Vec::with_capacity(counts.len());
    for &n in counts {
        let tasks = phantom_tasks(n, opts.extent, opts.seed)?;
        let workers = opts.workers.min(n);
        let job = BatchJob::segment(format!("bench-{n}"), tasks, workers, opts.seed);
        let mut walls = Vec::with_capacity(opts.runs);
        for _ in 0..opts.runs {
            let out = run_batch(&job)?;
            if !out.failures.is_empty() {
                return Err(Error::invalid(format!("benchmark block failed: {}", out.failures[0].error)));
            }
            walls.push(out.wall.as_secs_f64());
        }
        let wall_s = median(walls);
        let voxels = (n * voxel_count([opts.extent; 3])) as u64;
        rows.push(ScalingRow {
            volumes: n,
            voxels,
            workers,
            wall_s,
            voxels_per_s: voxels as f64 / wall_s,
            overhead_pct: None,
        });
        log::info!("{n} volumes on {workers} workers: {wall_s:.3} s");
    }
    if let Some(t1) = rows.iter().find(|r| r.volumes == 1).map(|r| r.wall_s) {
        for r in &mut rows {
            r.overhead_pct = Some((r.wall_s - t1) / t1 * 100.0);
        }
    }
    Ok(ScalingReport {
        rows,
        extent: opts.extent,
        runs: opts.runs,
        seed: opts.seed,
        parallelism,
        warnings,
    })
}
