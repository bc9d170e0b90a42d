use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use anyhow::Context;
use neurovol::annotation::{classes, region_annotation_id};
use neurovol::batch::{run_batch, scan_block_dir, BatchJob, Stage};
use neurovol::classify::decode_model;
use neurovol::stitching::{merge_regions, stitch_grid, stitch_labels, stitch_with_plan, translate_regions, StitchOptions};
use neurovol::store::{ChangeSet, IngestOptions};
use neurovol::volume::{
    block_file_name, generate_phantom, make_grid_layout, parse_block_file_name, read_block, read_labels,
    write_block, write_labels, PhantomSpec, ACTIVITY_CHANNEL, NUCLEAR_CHANNEL,
};
use neurovol::{Annotation, AnnotationKind, CellClass, GridPos, Provenance, RegionRecord, Store, VolumeBlock};
use serde_json::json;

use super::{input_dir, input_file, output_dir, read_json, write_json, Report};
use crate::config::PipelineConfig;
use crate::{GenPhantomArgs, IngestArgs, SegmentArgs, StitchArgs, UsageError};

pub const TRUTH_FILE: &str = "truth.json";
pub const REGIONS_FILE: &str = "regions.json";
pub const COINCIDENCE_FILE: &str = "coincidence.json";
pub const PLAN_FILE: &str = "plan.json";
pub const STITCHED_LABELS_FILE: &str = "stitched_labels.nvl";
pub const STITCHED_REGIONS_FILE: &str = "stitched_regions.json";
pub const CENTROID_LAYER: &str = "centroids";

fn labels_file(pos: GridPos) -> String {
    format!("labels_r{}_c{}.nvl", pos.row, pos.col)
}

fn stitched_file(channel: &str) -> String {
    format!("stitched_{channel}.nvb")
}

pub fn gen_phantom(a: &GenPhantomArgs, cfg: &PipelineConfig) -> anyhow::Result<Report> {
    let dir = output_dir(&cfg.paths.block_dir, "--out")?;
    let base = PhantomSpec::default();
    let spec = PhantomSpec {
        grid: make_grid_layout(a.rows, a.cols, true)?,
        block_extents: [a.extent; 3],
        true_overlap_x: a.overlap_x,
        true_overlap_y: a.overlap_y,
        nuclei_per_block: a.nuclei,
        radius_range: (a.min_radius, a.max_radius),
        noise_sigma: a.noise * base.dynamic_range(),
        ..base
    };
    let phantom = generate_phantom(&spec, cfg.seed)?;
    for tile in &phantom.tiles {
        for block in [&tile.nuclear, &tile.activity] {
            write_block(&dir.join(block_file_name(tile.pos, &block.channel)), block)?;
        }
    }
    write_json(&dir.join(TRUTH_FILE), &phantom.truth)?;
    let n = phantom.truth.nuclei.len();
    Ok(Report::new(
        format!(
            "wrote {} tiles ({}x{}) with {n} nuclei to {}\n",
            phantom.tiles.len(),
            a.rows,
            a.cols,
            dir.display()
        ),
        json!({ "tiles": phantom.tiles.len(), "nuclei": n, "dir": dir, "seed": cfg.seed }),
    ))
}

pub fn segment(a: &SegmentArgs, cfg: &PipelineConfig) -> anyhow::Result<Report> {
    let blocks = input_dir(&cfg.paths.block_dir, "--block-dir")?;
    let tasks = scan_block_dir(blocks)?;
    let model = match &a.model {
        Some(p) => {
            let text = std::fs::read_to_string(input_file(p)?)?;
            Some(Arc::new(decode_model(&text).with_context(|| format!("model {}", p.display()))?))
        }
        None => None,
    };
    let mut stages = vec![Stage::Segment];
    if model.is_some() {
        stages.push(Stage::Classify);
        if tasks.iter().all(|t| t.activity.is_some()) {
            stages.push(Stage::Coincidence);
        }
    }
    let out = output_dir(&cfg.paths.output_dir, "--out")?;
    let job = BatchJob {
        stages,
        params: cfg.segmentation,
        model,
        coincidence_threshold: cfg.activity_threshold,
        ..BatchJob::segment(blocks.display().to_string(), tasks, cfg.workers, cfg.seed)
    };
    let output = run_batch(&job)?;

    let mut regions: Vec<RegionRecord> = Vec::new();
    let mut coincidence = BTreeMap::new();
    for (pos, r) in &output.results {
        write_labels(&out.join(labels_file(*pos)), &r.labels.labels)?;
        regions.extend(r.regions.iter().cloned());
        if job.stages.contains(&Stage::Coincidence) {
            coincidence.insert(pos.to_string(), &r.coincidence);
        }
    }
    write_json(&out.join(REGIONS_FILE), &regions)?;
    if !coincidence.is_empty() {
        write_json(&out.join(COINCIDENCE_FILE), &coincidence)?;
    }

    let mut text = format!(
        "segmented {} blocks on {} workers in {:.2} s: {} regions\n",
        output.results.len(),
        output.workers,
        output.wall.as_secs_f64(),
        regions.len()
    );
    for f in &output.failures {
        text.push_str(&format!("block {} failed: {}\n", f.pos, f.error));
    }
    let active: usize = coincidence
        .values()
        .map(|flags| flags.iter().filter(|f| f.activity == neurovol::classify::Activity::Active).count())
        .sum();
    Ok(Report::new(
        text,
        json!({
            "blocks": output.results.len(),
            "regions": regions.len(),
            "active_neurons": active,
            "failures": output.failures,
            "workers": output.workers,
            "wall_s": output.wall.as_secs_f64(),
        }),
    ))
}

fn load_channel(dir: &Path, channel: &str) -> anyhow::Result<Vec<VolumeBlock>> {
    let mut blocks = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if matches!(parse_block_file_name(name), Some((_, ch)) if ch == channel) {
            blocks.push(read_block(&path)?);
        }
    }
    blocks.sort_by_key(|b| b.grid_pos);
    Ok(blocks)
}

pub fn stitch(a: &StitchArgs, cfg: &PipelineConfig) -> anyhow::Result<Report> {
    let dir = input_dir(&cfg.paths.block_dir, "--block-dir")?;
    let seg_dir = a
        .segmentation
        .as_ref()
        .map(|p| input_dir(&Some(p.clone()), "--segmentation").map(|_| p.as_path()))
        .transpose()?;
    let nuclear = load_channel(dir, NUCLEAR_CHANNEL)?;
    if nuclear.is_empty() {
        return Err(UsageError(format!("no {NUCLEAR_CHANNEL} blocks in {}", dir.display())).into());
    }
    let rows = nuclear.iter().map(|b| b.grid_pos.row).max().unwrap_or(0) + 1;
    let cols = nuclear.iter().map(|b| b.grid_pos.col).max().unwrap_or(0) + 1;
    let layout = make_grid_layout(rows, cols, true)?;
    let out = output_dir(&cfg.paths.output_dir, "--out")?;

    let opts = StitchOptions { max_frac: cfg.stitch.max_frac, threads: cfg.workers };
    let (stitched, plan) = stitch_grid(&nuclear, &layout, opts)?;
    write_block(&out.join(stitched_file(NUCLEAR_CHANNEL)), &stitched)?;
    std::fs::write(out.join(PLAN_FILE), plan.to_json()?)?;
    let mut channels = vec![NUCLEAR_CHANNEL];

    let activity = load_channel(dir, ACTIVITY_CHANNEL)?;
    if activity.len() == nuclear.len() {
        let merged = stitch_with_plan(&activity, &layout, &plan)?;
        write_block(&out.join(stitched_file(ACTIVITY_CHANNEL)), &merged)?;
        channels.push(ACTIVITY_CHANNEL);
    }

    let mut regions_kept = None;
    if let Some(seg) = seg_dir {
        let labels = nuclear
            .iter()
            .map(|b| read_labels(&seg.join(labels_file(b.grid_pos))).map(|v| (b.grid_pos, v)))
            .collect::<Result<Vec<_>, _>>()?;
        let refs: Vec<_> = labels.iter().map(|(p, v)| (*p, v)).collect();
        let (merged, _) = stitch_labels(&refs, &plan)?;
        write_labels(&out.join(STITCHED_LABELS_FILE), &merged)?;
        let regions: Vec<RegionRecord> = read_json(&seg.join(REGIONS_FILE))?;
        let kept = merge_regions(translate_regions(&regions, &plan)?, &plan);
        write_json(&out.join(STITCHED_REGIONS_FILE), &kept)?;
        regions_kept = Some(kept.len());
    }

    let mut text = format!(
        "stitched {rows}x{cols} grid into {:?} voxels\ncolumn overlaps {:?}, row overlaps {:?}\n",
        plan.extents, plan.column_overlaps, plan.row_overlaps
    );
    if let Some(n) = regions_kept {
        text.push_str(&format!("{n} regions after merging overlaps\n"));
    }
    Ok(Report::new(
        text,
        json!({
            "extents": plan.extents,
            "column_overlaps": plan.column_overlaps,
            "row_overlaps": plan.row_overlaps,
            "pairs": plan.pairs,
            "channels": channels,
            "regions": regions_kept,
        }),
    ))
}

fn centroid_annotation(r: &RegionRecord) -> Annotation {
    let class = match r.class {
        CellClass::Neuron => classes::NEURON,
        CellClass::Glia => classes::GLIA,
        CellClass::Unlabeled => classes::CENTROID,
    };
    Annotation::point(region_annotation_id(r.block, r.label), r.centroid, class, Provenance::Algorithm)
}

pub fn ingest(a: &IngestArgs, cfg: &PipelineConfig) -> anyhow::Result<Report> {
    let root = super::required(&cfg.paths.store_root, "--root")?;
    let mut volumes = Vec::new();
    if let Some(input) = &a.input {
        let input = input_dir(&Some(input.clone()), "--input")?.to_path_buf();
        for ch in [NUCLEAR_CHANNEL, ACTIVITY_CHANNEL] {
            let p = input.join(stitched_file(ch));
            if p.is_file() {
                volumes.push(p);
            }
        }
    }
    for v in &a.volumes {
        volumes.push(input_file(v)?.to_path_buf());
    }
    if volumes.is_empty() {
        return Err(UsageError("nothing to ingest: give --input or --volume".into()).into());
    }

    let store = Store::create(root)?;
    let opts = IngestOptions { chunk_size: [a.chunk; 3], num_scales: a.scales };
    let mut channels = Vec::new();
    let mut manifest = None;
    for p in &volumes {
        let block = read_block(p)?;
        channels.push(block.channel.clone());
        manifest = Some(store.ingest_volume(&block, &a.dataset, opts)?);
    }
    let manifest = manifest.expect("at least one volume");

    let mut label_dataset = None;
    let mut centroids = None;
    if let Some(input) = &a.input {
        let labels_path = input.join(STITCHED_LABELS_FILE);
        if labels_path.is_file() {
            let id = format!("{}_labels", a.dataset);
            let res = read_block(&volumes[0])?.resolution;
            store.ingest_labels(&read_labels(&labels_path)?, &res, &id, opts)?;
            label_dataset = Some(id);
        }
        let regions_path = input.join(STITCHED_REGIONS_FILE);
        if regions_path.is_file() {
            let regions: Vec<RegionRecord> = read_json(&regions_path)?;
            store.write_regions(&a.dataset, &regions)?;
            store.create_layer(&a.dataset, CENTROID_LAYER, AnnotationKind::Point, [a.ann_block; 3])?;
            let head = store.head_revision(&a.dataset, CENTROID_LAYER)?;
            if head == 0 {
                let cs = ChangeSet { upsert: regions.iter().map(centroid_annotation).collect(), delete: vec![] };
                store.write_annotations(&a.dataset, CENTROID_LAYER, &cs, 0, "pipeline")?;
            } else {
                log::warn!("{}: centroid layer already at revision {head}; left unchanged", a.dataset);
            }
            centroids = Some(regions.len());
        }
    }

    let mut text = format!(
        "dataset {} in {}: channels {:?}, {} scales, extents {:?}\n",
        a.dataset,
        root.display(),
        manifest.channels,
        manifest.scales.len(),
        manifest.extents()
    );
    if let Some(id) = &label_dataset {
        text.push_str(&format!("labels in dataset {id}\n"));
    }
    if let Some(n) = centroids {
        text.push_str(&format!("{n} centroids in layer {CENTROID_LAYER}\n"));
    }
    Ok(Report::new(
        text,
        json!({
            "dataset": a.dataset,
            "channels": manifest.channels,
            "scales": manifest.scales.iter().map(|s| &s.key).collect::<Vec<_>>(),
            "label_dataset": label_dataset,
            "centroids": centroids,
        }),
    ))
}
