//! Overlap estimation between neighbouring tiles and grid-wide placement.
//!
//! Every horizontal and vertical neighbour pair is searched independently.
//! Each column boundary then takes the lower median of its per-row
//! estimates (rows likewise), so the grid stays rectilinear. Overlap strips
//! are blended with a linear ramp sampled at voxel midpoints.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::annotation::Annotation;
use crate::error::{Error, Result};
use crate::segmentation::RegionRecord;
use crate::volume::{Extents, GridLayout, GridPos, Volume, VolumeBlock};

pub const DEFAULT_MAX_FRAC: f64 = 0.10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::X => "x",
            Axis::Y => "y",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlapResult {
    pub axis: Axis,
    pub best_overlap: usize,
    /// `(overlap, loss)` for every candidate, ascending.
    pub loss_curve: Vec<(usize, f64)>,
    pub loss: f64,
}

fn check_pair(a: Extents, b: Extents, axis: Axis) -> Result<()> {
    let ax = axis.index();
    if (0..3).any(|i| i != ax && a[i] != b[i]) {
        return Err(Error::invalid(format!(
            "perpendicular extents differ along {axis}: {a:?} vs {b:?}"
        )));
    }
    Ok(())
}

/// Mean absolute difference between the trailing `overlap` planes of `a`
/// and the leading `overlap` planes of `b` along `axis`.
pub fn overlap_loss(a: &Volume<u16>, b: &Volume<u16>, axis: Axis, overlap: usize) -> Result<f64> {
    let (ea, eb) = (a.extents(), b.extents());
    check_pair(ea, eb, axis)?;
    let ax = axis.index();
    if overlap == 0 || overlap > ea[ax].min(eb[ax]) {
        return Err(Error::invalid(format!(
            "overlap {overlap} outside 1..={} along {axis}",
            ea[ax].min(eb[ax])
        )));
    }
    let mut sum = 0u64;
    let mut n = 0u64;
    let [_, _, nz] = ea;
    match axis {
        Axis::X => {
            let (off, ny) = (ea[0] - overlap, ea[1]);
            for z in 0..nz {
                for y in 0..ny {
                    let ra = a.index(off, y, z);
                    let rb = b.index(0, y, z);
                    let sa = &a.as_slice()[ra..ra + overlap];
                    let sb = &b.as_slice()[rb..rb + overlap];
                    sum += sa.iter().zip(sb).map(|(&p, &q)| p.abs_diff(q) as u64).sum::<u64>();
                    n += overlap as u64;
                }
            }
        }
        Axis::Y => {
            let (off, nx) = (ea[1] - overlap, ea[0]);
            for z in 0..nz {
                for d in 0..overlap {
                    let ra = a.index(0, off + d, z);
                    let rb = b.index(0, d, z);
                    let sa = &a.as_slice()[ra..ra + nx];
                    let sb = &b.as_slice()[rb..rb + nx];
                    sum += sa.iter().zip(sb).map(|(&p, &q)| p.abs_diff(q) as u64).sum::<u64>();
                    n += nx as u64;
                }
            }
        }
    }
    Ok(sum as f64 / n as f64)
}

/// Largest candidate overlap: `floor(max_frac * extent)`.
pub fn max_overlap(extent: usize, max_frac: f64) -> usize {
    ((max_frac * extent as f64) + 1e-9).floor() as usize
}

/// Scans overlaps `1..=floor(max_frac * extent)`; ties go to the smallest.
pub fn find_optimal_overlap(
    a: &Volume<u16>,
    b: &Volume<u16>,
    axis: Axis,
    max_frac: f64,
) -> Result<OverlapResult> {
    check_pair(a.extents(), b.extents(), axis)?;
    if !(max_frac > 0.0 && max_frac <= 1.0) {
        return Err(Error::invalid(format!("max_frac must be in (0, 1], got {max_frac}")));
    }
    let ax = axis.index();
    let extent = a.extents()[ax].min(b.extents()[ax]);
    let hi = max_overlap(extent, max_frac);
    if hi == 0 {
        return Err(Error::invalid(format!(
            "no candidate overlaps: extent {extent} along {axis} with max_frac {max_frac}"
        )));
    }
    let mut loss_curve = Vec::with_capacity(hi);
    for v in 1..=hi {
        loss_curve.push((v, overlap_loss(a, b, axis, v)?));
    }
    let (best_overlap, loss) = loss_curve
        .iter()
        .copied()
        .fold((0, f64::INFINITY), |best, (v, l)| if l < best.1 { (v, l) } else { best });
    Ok(OverlapResult {
        axis,
        best_overlap,
        loss_curve,
        loss,
    })
}

/// Ramp weight of the incoming (second) tile at depth `i` of a `depth`-wide overlap.
fn ramp(i: usize, depth: usize) -> f64 {
    (i as f64 + 0.5) / depth as f64
}

fn to_u16(v: f64) -> u16 {
    v.round().clamp(0.0, u16::MAX as f64) as u16
}

/// Linear cross-fade from `a` to `b` along `axis`, `t = (i + 0.5) / depth`.
pub fn blend_overlap(a: &Volume<u16>, b: &Volume<u16>, axis: Axis) -> Result<Volume<u16>> {
    if a.extents() != b.extents() {
        return Err(Error::invalid(format!(
            "strip extents differ: {:?} vs {:?}",
            a.extents(),
            b.extents()
        )));
    }
    let depth = a.extents()[axis.index()];
    Ok(Volume::from_fn(a.extents(), |x, y, z| {
        let t = ramp([x, y][axis.index()], depth);
        to_u16((1.0 - t) * a.get(x, y, z) as f64 + t * b.get(x, y, z) as f64)
    }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub pos: GridPos,
    pub origin: [usize; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairEstimate {
    pub a: GridPos,
    pub b: GridPos,
    pub axis: Axis,
    pub best_overlap: usize,
    pub loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StitchPlan {
    pub rows: usize,
    pub cols: usize,
    pub block_extents: Extents,
    pub extents: Extents,
    /// Overlap used at each column boundary (`cols - 1` entries).
    pub column_overlaps: Vec<usize>,
    /// Overlap used at each row boundary (`rows - 1` entries).
    pub row_overlaps: Vec<usize>,
    pub placements: Vec<Placement>,
    pub pairs: Vec<PairEstimate>,
}

fn lower_median(mut v: Vec<usize>) -> usize {
    v.sort_unstable();
    v[(v.len() - 1) / 2]
}

/// Per-axis index of the tile owning coordinate `c` and its blend weight.
/// `starts[k]` is the first voxel of tile k, `overlaps[k]` the overlap
/// between tiles k and k+1.
fn axis_weights(c: usize, starts: &[usize], overlaps: &[usize], n: usize) -> Vec<(usize, f64)> {
    let mut out = Vec::with_capacity(2);
    for (k, &s) in starts.iter().enumerate() {
        if c < s || c >= s + n {
            continue;
        }
        let local = c - s;
        let mut w = 1.0;
        if k > 0 && local < overlaps[k - 1] {
            w *= ramp(local, overlaps[k - 1]);
        }
        if k + 1 < starts.len() && local >= n - overlaps[k] {
            w *= 1.0 - ramp(local - (n - overlaps[k]), overlaps[k]);
        }
        out.push((k, w));
    }
    out
}

fn owner_along(c: f64, starts: &[usize], overlaps: &[usize], n: usize) -> Option<usize> {
    if c < 0.0 {
        return None;
    }
    let c = c.round() as usize;
    // max weight, ties to the lower index
    axis_weights(c, starts, overlaps, n)
        .into_iter()
        .fold(None, |best: Option<(usize, f64)>, (k, w)| match best {
            Some((_, bw)) if bw >= w => best,
            _ => Some((k, w)),
        })
        .map(|(k, _)| k)
}

impl StitchPlan {
    /// Builds placements from boundary overlaps.
    pub fn from_overlaps(
        rows: usize,
        cols: usize,
        block_extents: Extents,
        column_overlaps: Vec<usize>,
        row_overlaps: Vec<usize>,
        pairs: Vec<PairEstimate>,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 || column_overlaps.len() + 1 != cols || row_overlaps.len() + 1 != rows {
            return Err(Error::invalid("overlap lists do not match the grid"));
        }
        let [nx, ny, nz] = block_extents;
        if column_overlaps.iter().any(|&o| o == 0 || 2 * o > nx) || row_overlaps.iter().any(|&o| o == 0 || 2 * o > ny) {
            return Err(Error::invalid("overlaps must be in 1..=extent/2"));
        }
        let mut plan = StitchPlan {
            rows,
            cols,
            block_extents,
            extents: [0, 0, nz],
            column_overlaps,
            row_overlaps,
            placements: Vec::with_capacity(rows * cols),
            pairs,
        };
        let xs = plan.column_starts();
        let ys = plan.row_starts();
        plan.extents = [xs[cols - 1] + nx, ys[rows - 1] + ny, nz];
        for (row, &y0) in ys.iter().enumerate() {
            for (col, &x0) in xs.iter().enumerate() {
                plan.placements.push(Placement {
                    pos: GridPos::new(row, col),
                    origin: [x0, y0, 0],
                });
            }
        }
        Ok(plan)
    }

    fn column_starts(&self) -> Vec<usize> {
        starts(&self.column_overlaps, self.block_extents[0])
    }

    fn row_starts(&self) -> Vec<usize> {
        starts(&self.row_overlaps, self.block_extents[1])
    }

    pub fn origin(&self, pos: GridPos) -> Result<[usize; 3]> {
        self.placements
            .iter()
            .find(|p| p.pos == pos)
            .map(|p| p.origin)
            .ok_or_else(|| Error::invalid(format!("block {pos} is not in the stitch plan")))
    }

    pub fn offset(&self, pos: GridPos) -> Result<[f64; 3]> {
        Ok(self.origin(pos)?.map(|v| v as f64))
    }

    /// Tile with the largest blend weight at a stitched coordinate; ties go
    /// to the lower row/column.
    pub fn owner(&self, coord: [f64; 3]) -> Option<GridPos> {
        let col = owner_along(coord[0], &self.column_starts(), &self.column_overlaps, self.block_extents[0])?;
        let row = owner_along(coord[1], &self.row_starts(), &self.row_overlaps, self.block_extents[1])?;
        Some(GridPos::new(row, col))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let plan: StitchPlan = serde_json::from_str(text)?;
        let rebuilt = StitchPlan::from_overlaps(
            plan.rows,
            plan.cols,
            plan.block_extents,
            plan.column_overlaps.clone(),
            plan.row_overlaps.clone(),
            plan.pairs.clone(),
        )?;
        if rebuilt != plan {
            return Err(Error::format("stitch plan", "placements disagree with overlaps"));
        }
        Ok(plan)
    }
}

fn starts(overlaps: &[usize], n: usize) -> Vec<usize> {
    let mut out = vec![0];
    for &o in overlaps {
        let last = *out.last().expect("non-empty");
        out.push(last + n - o);
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StitchOptions {
    pub max_frac: f64,
    /// Threads used for the pairwise searches.
    pub threads: usize,
}

impl Default for StitchOptions {
    fn default() -> Self {
        StitchOptions {
            max_frac: DEFAULT_MAX_FRAC,
            threads: std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

/// Orders `blocks` by grid position and checks they fill `layout` uniformly.
fn arrange<'a>(blocks: &'a [VolumeBlock], layout: &GridLayout) -> Result<Vec<&'a VolumeBlock>> {
    if blocks.is_empty() {
        return Err(Error::invalid("no blocks to stitch"));
    }
    let mut grid: Vec<Option<&VolumeBlock>> = vec![None; layout.rows * layout.cols];
    for b in blocks {
        let p = b.grid_pos;
        if !layout.contains(p) {
            return Err(Error::invalid(format!("block {p} outside the {}x{} grid", layout.rows, layout.cols)));
        }
        let slot = &mut grid[p.row * layout.cols + p.col];
        if slot.is_some() {
            return Err(Error::invalid(format!("duplicate block {p}")));
        }
        *slot = Some(b);
    }
    let first = &blocks[0];
    let mut out = Vec::with_capacity(grid.len());
    for (i, slot) in grid.into_iter().enumerate() {
        let b = slot.ok_or_else(|| {
            Error::invalid(format!("missing block {}", GridPos::new(i / layout.cols, i % layout.cols)))
        })?;
        if b.extents() != first.extents() || b.resolution != first.resolution {
            return Err(Error::invalid(format!("block {} differs in shape or resolution", b.grid_pos)));
        }
        out.push(b);
    }
    Ok(out)
}

/// Estimates all neighbour overlaps, places the tiles and blends them.
pub fn stitch_grid(
    blocks: &[VolumeBlock],
    layout: &GridLayout,
    opts: StitchOptions,
) -> Result<(VolumeBlock, StitchPlan)> {
    let grid = arrange(blocks, layout)?;
    let (rows, cols) = (layout.rows, layout.cols);
    let at = |r: usize, c: usize| grid[r * cols + c];

    let mut jobs: Vec<(GridPos, GridPos, Axis)> = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                jobs.push((GridPos::new(r, c), GridPos::new(r, c + 1), Axis::X));
            }
            if r + 1 < rows {
                jobs.push((GridPos::new(r, c), GridPos::new(r + 1, c), Axis::Y));
            }
        }
    }
    let search = |&(a, b, axis): &(GridPos, GridPos, Axis)| -> Result<PairEstimate> {
        let res = find_optimal_overlap(&at(a.row, a.col).voxels, &at(b.row, b.col).voxels, axis, opts.max_frac)?;
        Ok(PairEstimate {
            a,
            b,
            axis,
            best_overlap: res.best_overlap,
            loss: res.loss,
        })
    };
    let threads = opts.threads.clamp(1, jobs.len().max(1));
    let pairs: Vec<PairEstimate> = if threads == 1 {
        jobs.iter().map(search).collect::<Result<_>>()?
    } else {
        let per = jobs.len().div_ceil(threads);
        std::thread::scope(|s| {
            let handles: Vec<_> = jobs
                .chunks(per)
                .map(|chunk| s.spawn(move || chunk.iter().map(search).collect::<Result<Vec<_>>>()))
                .collect();
            let mut all = Vec::with_capacity(jobs.len());
            for h in handles {
                all.extend(h.join().expect("overlap search panicked")?);
            }
            Ok::<_, Error>(all)
        })?
    };

    let boundary = |axis: Axis, k: usize| -> usize {
        lower_median(
            pairs
                .iter()
                .filter(|p| p.axis == axis && [p.a.col, p.a.row][axis.index()] == k)
                .map(|p| p.best_overlap)
                .collect(),
        )
    };
    let column_overlaps = (0..cols - 1).map(|k| boundary(Axis::X, k)).collect();
    let row_overlaps = (0..rows - 1).map(|k| boundary(Axis::Y, k)).collect();
    let plan = StitchPlan::from_overlaps(rows, cols, grid[0].extents(), column_overlaps, row_overlaps, pairs)?;
    let stitched = compose(&grid, &plan)?;
    Ok((stitched, plan))
}

/// Places and blends another channel with an existing plan.
pub fn stitch_with_plan(blocks: &[VolumeBlock], layout: &GridLayout, plan: &StitchPlan) -> Result<VolumeBlock> {
    let grid = arrange(blocks, layout)?;
    if layout.rows != plan.rows || layout.cols != plan.cols || grid[0].extents() != plan.block_extents {
        return Err(Error::invalid("blocks do not match the stitch plan"));
    }
    compose(&grid, plan)
}

fn compose(grid: &[&VolumeBlock], plan: &StitchPlan) -> Result<VolumeBlock> {
    let [nx, ny, nz] = plan.block_extents;
    let xs = plan.column_starts();
    let ys = plan.row_starts();
    let wx: Vec<Vec<(usize, f64)>> = (0..plan.extents[0])
        .map(|x| axis_weights(x, &xs, &plan.column_overlaps, nx))
        .collect();
    let wy: Vec<Vec<(usize, f64)>> = (0..plan.extents[1])
        .map(|y| axis_weights(y, &ys, &plan.row_overlaps, ny))
        .collect();
    let out = Volume::from_fn(plan.extents, |x, y, z| {
        let mut acc = 0.0;
        let mut wsum = 0.0;
        for &(r, w_r) in &wy[y] {
            for &(c, w_c) in &wx[x] {
                let w = w_r * w_c;
                let b = &grid[r * plan.cols + c].voxels;
                acc += w * b.get(x - xs[c], y - ys[r], z) as f64;
                wsum += w;
            }
        }
        to_u16(acc / wsum)
    });
    debug_assert_eq!(out.extents()[2], nz);
    VolumeBlock::new(out, grid[0].channel.clone(), GridPos::new(0, 0), grid[0].resolution)
}

/// Stitches per-tile label volumes. Every stitched voxel takes the label of
/// its owning tile, offset so ids stay unique; returns the per-tile offsets.
pub fn stitch_labels(
    labels: &[(GridPos, &Volume<u32>)],
    plan: &StitchPlan,
) -> Result<(Volume<u32>, Vec<(GridPos, u32)>)> {
    let mut by_pos: Vec<Option<&Volume<u32>>> = vec![None; plan.rows * plan.cols];
    for &(p, v) in labels {
        if p.row >= plan.rows || p.col >= plan.cols || v.extents() != plan.block_extents {
            return Err(Error::invalid(format!("label volume {p} does not fit the plan")));
        }
        by_pos[p.row * plan.cols + p.col] = Some(v);
    }
    let mut offsets = Vec::with_capacity(by_pos.len());
    let mut next = 0u32;
    for (i, v) in by_pos.iter().enumerate() {
        let v = v.ok_or_else(|| {
            Error::invalid(format!("missing labels for {}", GridPos::new(i / plan.cols, i % plan.cols)))
        })?;
        offsets.push((GridPos::new(i / plan.cols, i % plan.cols), next));
        let max = v.as_slice().iter().copied().max().unwrap_or(0);
        next = next
            .checked_add(max)
            .ok_or_else(|| Error::invalid("stitched label ids overflow u32"))?;
    }
    let xs = plan.column_starts();
    let ys = plan.row_starts();
    let [nx, ny, _] = plan.block_extents;
    let col_of: Vec<usize> = (0..plan.extents[0])
        .map(|x| owner_along(x as f64, &xs, &plan.column_overlaps, nx).expect("inside"))
        .collect();
    let row_of: Vec<usize> = (0..plan.extents[1])
        .map(|y| owner_along(y as f64, &ys, &plan.row_overlaps, ny).expect("inside"))
        .collect();
    let out = Volume::from_fn(plan.extents, |x, y, z| {
        let (r, c) = (row_of[y], col_of[x]);
        let i = r * plan.cols + c;
        let l = by_pos[i].expect("checked").get(x - xs[c], y - ys[r], z);
        if l == 0 {
            0
        } else {
            l + offsets[i].1
        }
    });
    Ok((out, offsets))
}

/// Moves annotations from a tile's frame into the stitched frame.
pub fn translate_annotations(annotations: &[Annotation], pos: GridPos, plan: &StitchPlan) -> Result<Vec<Annotation>> {
    let offset = plan.offset(pos)?;
    Ok(annotations
        .iter()
        .map(|a| {
            let mut a = a.clone();
            a.translate(offset);
            a
        })
        .collect())
}

/// Moves region centroids and bounding boxes into the stitched frame.
pub fn translate_regions(regions: &[RegionRecord], plan: &StitchPlan) -> Result<Vec<RegionRecord>> {
    regions
        .iter()
        .map(|r| {
            let o = plan.origin(r.block)?;
            let mut r = r.clone();
            for a in 0..3 {
                r.centroid[a] += o[a] as f64;
                r.bbox_min[a] += o[a];
                r.bbox_max[a] += o[a];
            }
            Ok(r)
        })
        .collect()
}

/// Drops duplicate detections of nuclei that straddle an overlap: a region
/// in stitched coordinates survives only if its tile owns its centroid.
pub fn merge_regions(regions: Vec<RegionRecord>, plan: &StitchPlan) -> Vec<RegionRecord> {
    regions
        .into_iter()
        .filter(|r| plan.owner(r.centroid) == Some(r.block))
        .collect()
}
