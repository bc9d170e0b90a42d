//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use neurovol::annotation::AnnotationKind;
use neurovol::batch::{benchmark_scaling, run_batch_with, BatchJob, BlockTask, ScalingOptions, Stage, ThreadPoolExecutor};
use neurovol::classify::synthetic::acceptance_set;
use neurovol::classify::{cross_validate, train_svm, DEFAULT_C, DEFAULT_FOLDS};
use neurovol::segmentation::segment_block;
use neurovol::stitching::{stitch_grid, Axis, StitchOptions};
use neurovol::store::{
    export_csv, export_json, import_csv, import_json, ChangeSet, ExportFormat, IngestOptions, RevisionSelector,
};
use neurovol::volume::{generate_phantom, make_grid_layout, PhantomSpec};
use neurovol::{Annotation, Error, GridPos, Provenance, Resolution, SegParams, Store, Volume, VolumeBlock};
use neurovol_serve::{serve, ServerConfig};
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn stitching_exactness() -> Outcome {
    let spec = PhantomSpec {
        grid: make_grid_layout(5, 5, true).map_err(|e| e.to_string())?,
        ..PhantomSpec::default()
    };
    let phantom = generate_phantom(&spec, 1).map_err(|e| e.to_string())?;
    let blocks: Vec<VolumeBlock> = phantom.nuclear_blocks().cloned().collect();
    let start = Instant::now();
    let opts = StitchOptions { threads: 1, ..StitchOptions::default() };
    let (_, plan) = stitch_grid(&blocks, &spec.grid, opts).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let exact = plan
        .pairs
        .iter()
        .filter(|p| {
            let truth = match p.axis {
                Axis::X => spec.true_overlap_x,
                Axis::Y => spec.true_overlap_y,
            };
            p.best_overlap == truth && p.loss == 0.0
        })
        .count();
    check(
        plan.pairs.len() == 40 && exact == 40 && secs < 60.0,
        format!("{exact}/{} pairs exact with zero loss, {secs:.2} s single-threaded", plan.pairs.len()),
    )
}

fn stitching_robustness() -> Outcome {
    let base = PhantomSpec::default();
    let spec = PhantomSpec {
        grid: make_grid_layout(2, 2, true).map_err(|e| e.to_string())?,
        noise_sigma: 0.05 * base.dynamic_range(),
        ..base
    };
    let mut good = 0;
    for seed in 0..100 {
        let phantom = generate_phantom(&spec, 1000 + seed).map_err(|e| e.to_string())?;
        let blocks: Vec<VolumeBlock> = phantom.nuclear_blocks().cloned().collect();
        let (_, plan) = stitch_grid(&blocks, &spec.grid, StitchOptions::default()).map_err(|e| e.to_string())?;
        let ok = plan.pairs.iter().all(|p| {
            let truth = match p.axis {
                Axis::X => spec.true_overlap_x,
                Axis::Y => spec.true_overlap_y,
            };
            p.best_overlap.abs_diff(truth) <= 1
        });
        good += ok as usize;
    }
    check(good >= 95, format!("{good}/100 trials within ±1 voxel at noise 5%"))
}

fn segmentation_recall() -> Outcome {
    let base = PhantomSpec::default();
    let spec = PhantomSpec {
        block_extents: [128; 3],
        nuclei_per_block: 50,
        radius_range: (4.0, 6.0),
        noise_sigma: 0.02 * base.dynamic_range(),
        ..base
    };
    let phantom = generate_phantom(&spec, 7).map_err(|e| e.to_string())?;
    let tile = &phantom.tiles[0];
    let (_, regions) = segment_block(&tile.nuclear, &SegParams::default()).map_err(|e| e.to_string())?;
    let truth: Vec<[f64; 3]> = phantom.truth.nuclei_in_block(tile.pos).into_iter().map(|(_, c)| c).collect();

    let mut pairs = Vec::new();
    for (i, t) in truth.iter().enumerate() {
        for (j, r) in regions.iter().enumerate() {
            let d = (0..3).map(|a| (t[a] - r.centroid[a]).powi(2)).sum::<f64>().sqrt();
            if d <= 2.0 {
                pairs.push((d, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (mut used_t, mut used_r) = (BTreeSet::new(), BTreeSet::new());
    let mut worst: f64 = 0.0;
    for (d, i, j) in pairs {
        if !used_t.contains(&i) && !used_r.contains(&j) {
            used_t.insert(i);
            used_r.insert(j);
            worst = worst.max(d);
        }
    }
    let matched = used_t.len();
    let spurious = regions.len() - used_r.len();
    check(
        truth.len() == 50 && matched >= 48 && spurious <= 2,
        format!(
            "{matched}/{} nuclei matched within 2 voxels (worst {worst:.2}), {spurious} spurious",
            truth.len()
        ),
    )
}

fn classifier_auc() -> Outcome {
    let set = acceptance_set(0);
    let run = || cross_validate(&set.features, &set.labels, DEFAULT_FOLDS, DEFAULT_C, 42).map_err(|e| e.to_string());
    let a = run()?;
    let b = run()?;
    check(
        a.mean_auc >= 0.97 && a == b,
        format!("5-fold mean AUC {:.4}, repeat identical: {}", a.mean_auc, a == b),
    )
}

/// Distinct physical cores from /proc/cpuinfo, else logical CPUs.
fn physical_cores() -> usize {
    let logical = std::thread::available_parallelism().map_or(1, |n| n.get());
    let Ok(text) = std::fs::read_to_string("/proc/cpuinfo") else {
        return logical;
    };
    let mut cores = BTreeSet::new();
    let (mut phys, mut core) = (None, None);
    for line in text.lines().chain(std::iter::once("")) {
        if line.trim().is_empty() {
            if let (Some(p), Some(c)) = (phys.take(), core.take()) {
                cores.insert((p, c));
            }
            continue;
        }
        if let Some((k, v)) = line.split_once(':') {
            match k.trim() {
                "physical id" => phys = Some(v.trim().to_string()),
                "core id" => core = Some(v.trim().to_string()),
                _ => {}
            }
        }
    }
    if cores.is_empty() {
        logical
    } else {
        cores.len().min(logical)
    }
}

fn weak_scaling() -> Outcome {
    let w = physical_cores().min(8);
    let mut counts = vec![1];
    if w > 1 {
        counts.push(w);
    }
    let opts = ScalingOptions { extent: 64, workers: w, seed: 0, runs: 3 };
    let report = benchmark_scaling(&counts, opts).map_err(|e| e.to_string())?;
    print!("{}", report.throughput_table());
    let t1 = report.rows[0].wall_s;
    let tw = report.rows.last().expect("row").wall_s;
    let ratio = tw / t1;
    check(
        ratio <= 1.3,
        format!("W={w}: {w} volumes {tw:.3} s vs 1 volume {t1:.3} s, ratio {ratio:.2}"),
    )
}

/// Independent mean-pool pyramid step: boxes of 1 or 2, partial boxes at
/// odd edges, rounding half up.
fn pool(v: &Volume<u16>, f: [usize; 3]) -> Volume<u16> {
    let e = v.extents();
    let out: [usize; 3] = std::array::from_fn(|a| e[a].div_ceil(f[a]));
    let mut data = Vec::with_capacity(out.iter().product());
    for z in 0..out[2] {
        for y in 0..out[1] {
            for x in 0..out[0] {
                let (mut sum, mut n) = (0u64, 0u64);
                for dz in 0..f[2] {
                    for dy in 0..f[1] {
                        for dx in 0..f[0] {
                            let (xx, yy, zz) = (x * f[0] + dx, y * f[1] + dy, z * f[2] + dz);
                            if xx < e[0] && yy < e[1] && zz < e[2] {
                                sum += v.get(xx, yy, zz) as u64;
                                n += 1;
                            }
                        }
                    }
                }
                data.push(((sum * 2 + n) / (2 * n)) as u16);
            }
        }
    }
    Volume::new(out, data).expect("shape")
}

fn key_factors(key: &str) -> [usize; 3] {
    let v: Vec<usize> = key.split('_').map(|s| s.parse().expect("factor")).collect();
    [v[0], v[1], v[2]]
}

fn store_round_trip() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let store = Store::create(dir.path()).map_err(|e| e.to_string())?;
    let extents = [[64, 64, 64], [100, 100, 100], [128, 96, 40]];
    let chunks = [64, 32];
    let mut oracles = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for ext in extents {
        for c in chunks {
            let vol = Volume::from_fn(ext, |_, _, _| rng.random::<u16>());
            let id = format!("v{}x{}x{}c{c}", ext[0], ext[1], ext[2]);
            let block = VolumeBlock::new(vol.clone(), "dapi", GridPos::new(0, 0), Resolution::isotropic_unit())
                .map_err(|e| e.to_string())?;
            let m = store
                .ingest_volume(&block, &id, IngestOptions { chunk_size: [c; 3], num_scales: 3 })
                .map_err(|e| e.to_string())?;
            let back = store.reassemble_channel(&id, &m.scales[0].key, 0).map_err(|e| e.to_string())?;
            if back != vol {
                return Err(format!("{id}: reassembled volume differs"));
            }
            let mut level = vol;
            let mut prev = [1, 1, 1];
            let mut levels = Vec::new();
            for s in &m.scales {
                let f = key_factors(&s.key);
                level = pool(&level, std::array::from_fn(|a| f[a] / prev[a]));
                prev = f;
                levels.push((s.clone(), level.clone()));
            }
            oracles.push((id, levels));
        }
    }

    let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    let server = rt
        .block_on(serve(ServerConfig::new("127.0.0.1:0".parse().expect("addr"), dir.path())))
        .map_err(|e| e.to_string())?;
    let url = server.url();
    let mut served = 0;
    let mut mismatch = Vec::new();
    for (id, levels) in &oracles {
        for (scale, vol) in levels {
            let g = scale.chunk_grid();
            for k in 0..g[2] {
                for j in 0..g[1] {
                    for i in 0..g[0] {
                        let b = scale.chunk_bounds([i, j, k]).expect("in grid");
                        let name = scale.chunk_name([i, j, k]).expect("in grid");
                        let mut expect = Vec::new();
                        for z in b[2].0..b[2].1 {
                            for y in b[1].0..b[1].1 {
                                for x in b[0].0..b[0].1 {
                                    expect.extend_from_slice(&vol.get(x, y, z).to_le_bytes());
                                }
                            }
                        }
                        let got = ureq::get(&format!("{url}/d/{id}/scales/{}/{name}", scale.key))
                            .call()
                            .map_err(|e| e.to_string())?
                            .body_mut()
                            .with_config()
                            .limit(u64::MAX)
                            .read_to_vec()
                            .map_err(|e| e.to_string())?;
                        served += 1;
                        if got != expect {
                            mismatch.push(format!("{id}/{}/{name}", scale.key));
                        }
                    }
                }
            }
        }
    }
    rt.block_on(server.shutdown()).map_err(|e| e.to_string())?;
    check(
        mismatch.is_empty(),
        format!("6 volumes bit-exact, {served} served chunks checked, {} mismatches {:?}", mismatch.len(), mismatch.iter().take(3).collect::<Vec<_>>()),
    )
}

fn strip(mut a: Vec<Annotation>) -> Vec<Annotation> {
    for x in &mut a {
        x.block.clear();
    }
    a.sort_by(|x, y| x.id.cmp(&y.id));
    a
}

/// `writers` threads race until the head reaches `target`.
fn cas_race(writers: usize, target: u64) -> Result<(), TestCaseError> {
    let dir = tempfile::tempdir().map_err(|e| TestCaseError::fail(e.to_string()))?;
    let store = Store::create(dir.path()).unwrap();
    let vol = Volume::filled([64, 64, 8], 0u16);
    let block = VolumeBlock::new(vol, "dapi", GridPos::new(0, 0), Resolution::isotropic_unit()).unwrap();
    store.ingest_volume(&block, "d", IngestOptions { chunk_size: [64; 3], num_scales: 1 }).unwrap();
    store.create_layer("d", "l", AnnotationKind::Point, [16, 16, 8]).unwrap();

    let log: Mutex<Vec<(u64, usize, ChangeSet)>> = Mutex::new(Vec::new());
    std::thread::scope(|s| {
        for w in 0..writers {
            let (store, log) = (store.clone(), &log);
            s.spawn(move || {
                let mut k = 0usize;
                loop {
                    let head = store.head_revision("d", "l").unwrap();
                    if head >= target {
                        break;
                    }
                    let p = [(w * 7 + k) as f64 % 64.0, (k * 3) as f64 % 64.0, (w % 8) as f64];
                    let cs = ChangeSet {
                        upsert: vec![
                            Annotation::point(format!("w{w}-{k}"), p, "neuron", Provenance::Human),
                            Annotation::point("shared", p, format!("by-w{w}"), Provenance::Human),
                        ],
                        delete: vec![],
                    };
                    match store.write_annotations("d", "l", &cs, head, &format!("w{w}")) {
                        Ok(rev) => {
                            log.lock().unwrap().push((rev.revision, w, cs));
                            k += 1;
                        }
                        Err(Error::StaleRevision { .. }) => {}
                        Err(e) => panic!("writer {w}: {e}"),
                    }
                }
            });
        }
    });

    let mut log = log.into_inner().unwrap();
    log.sort_by_key(|e| e.0);
    let revs: Vec<u64> = log.iter().map(|e| e.0).collect();
    if revs != (1..=target).collect::<Vec<_>>() {
        return Err(TestCaseError::fail(format!("successful revisions {revs:?}")));
    }
    let mut state: BTreeMap<String, Annotation> = BTreeMap::new();
    for (rev, w, cs) in &log {
        for a in &cs.upsert {
            state.insert(a.id.clone(), a.clone());
        }
        let (n, got) = store.read_annotations("d", "l", None, RevisionSelector::At(*rev)).unwrap();
        let expect: Vec<Annotation> = state.values().cloned().collect();
        if n != *rev || strip(got) != strip(expect) {
            return Err(TestCaseError::fail(format!("revision {rev} by writer {w} reads back differently")));
        }
        let meta = store.revision("d", "l", *rev).unwrap();
        if meta.parent != Some(rev - 1).filter(|&p| p > 0) {
            return Err(TestCaseError::fail(format!("revision {rev} parent {:?}", meta.parent)));
        }
    }
    let (_, head) = store.read_annotations("d", "l", None, RevisionSelector::Head).unwrap();
    if head.len() != target as usize + 1 {
        return Err(TestCaseError::fail(format!("head holds {} annotations", head.len())));
    }
    Ok(())
}

fn revision_safety() -> Outcome {
    let mut runner = TestRunner::new(Config { cases: 8, failure_persistence: None, ..Config::default() });
    let cases = Arc::new(Mutex::new(Vec::new()));
    let seen = Arc::clone(&cases);
    runner
        .run(&(2usize..=8), move |writers| {
            seen.lock().unwrap().push(writers);
            cas_race(writers, 100)
        })
        .map_err(|e| e.to_string())?;
    let cases = cases.lock().unwrap();
    Ok(format!(
        "{} cases with writer counts {:?}: 100 writes, one success per head, history intact",
        cases.len(),
        cases
    ))
}

fn random_annotations(n: usize, seed: u64) -> Vec<Annotation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes = ["neuron", "glia", "axon", "centroid"];
    let provs = [Provenance::Human, Provenance::Algorithm];
    (0..n)
        .map(|i| {
            let mut pt = || [rng.random_range(0.0..128.0), rng.random_range(0.0..96.0), rng.random_range(0.0..40.0)];
            let class = classes[i % classes.len()];
            let prov = provs[i % 2];
            if i % 5 == 4 {
                let len = 2 + i % 5;
                let coords = (0..len).map(|_| pt()).collect();
                Annotation::polyline(format!("a{i:04}"), coords, class, prov)
            } else {
                Annotation::point(format!("a{i:04}"), pt(), class, prov)
            }
        })
        .collect()
}

fn format_round_trip() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let store = Store::create(dir.path()).map_err(|e| e.to_string())?;
    let block = VolumeBlock::new(Volume::filled([128, 96, 40], 0u16), "dapi", GridPos::new(0, 0), Resolution::isotropic_unit())
        .map_err(|e| e.to_string())?;
    let opts = IngestOptions { chunk_size: [64; 3], num_scales: 1 };
    for ds in ["src", "dst"] {
        store.ingest_volume(&block, ds, opts).map_err(|e| e.to_string())?;
        for layer in ["json", "csv"] {
            store.create_layer(ds, layer, AnnotationKind::Polyline, [32, 32, 20]).map_err(|e| e.to_string())?;
        }
    }
    let anns = random_annotations(1000, 8);
    let polylines = anns.iter().filter(|a| a.kind == AnnotationKind::Polyline).count();
    for layer in ["json", "csv"] {
        let cs = ChangeSet { upsert: anns.clone(), delete: vec![] };
        store.write_annotations("src", layer, &cs, 0, "t").map_err(|e| e.to_string())?;
    }
    let e = |e: Error| e.to_string();

    let json1 = store.export_annotations("src", "json", RevisionSelector::Head, ExportFormat::Json).map_err(e)?;
    let parsed = import_json(&json1).map_err(e)?;
    let json2 = export_json(&parsed).map_err(e)?;
    let upsert: Vec<Annotation> = parsed.annotations.into_iter().map(|a| a.into_annotation()).collect();
    store.write_annotations("dst", "json", &ChangeSet { upsert, delete: vec![] }, 0, "t").map_err(e)?;
    let json3 = store.export_annotations("dst", "json", RevisionSelector::Head, ExportFormat::Json).map_err(e)?;

    let csv1 = store.export_annotations("src", "csv", RevisionSelector::Head, ExportFormat::Csv).map_err(e)?;
    let parsed = import_csv(&csv1).map_err(e)?;
    let csv2 = export_csv(&parsed).map_err(e)?;
    let upsert: Vec<Annotation> = parsed.into_iter().map(|a| a.into_annotation()).collect();
    store.write_annotations("dst", "csv", &ChangeSet { upsert, delete: vec![] }, 0, "t").map_err(e)?;
    let csv3 = store.export_annotations("dst", "csv", RevisionSelector::Head, ExportFormat::Csv).map_err(e)?;

    let json_ok = json1 == json2 && json3 == json1.replace("\"dataset\": \"src\"", "\"dataset\": \"dst\"");
    let csv_ok = csv1 == csv2 && csv1 == csv3;
    check(
        json_ok && csv_ok,
        format!("1000 annotations ({polylines} polylines): JSON identical {json_ok}, CSV identical {csv_ok}"),
    )
}

fn batch_determinism() -> Outcome {
    let base = PhantomSpec::default();
    let spec = PhantomSpec {
        grid: make_grid_layout(5, 5, true).map_err(|e| e.to_string())?,
        noise_sigma: 0.02 * base.dynamic_range(),
        ..base
    };
    let phantom = generate_phantom(&spec, 9).map_err(|e| e.to_string())?;
    let tasks: Vec<BlockTask> = phantom
        .tiles
        .iter()
        .map(|t| BlockTask {
            pos: t.pos,
            nuclear: t.nuclear.clone().into(),
            activity: Some(t.activity.clone().into()),
        })
        .collect();
    let set = acceptance_set(0);
    let model = train_svm(&set.features, &set.labels, DEFAULT_C, 0).map_err(|e| e.to_string())?;
    let job = BatchJob {
        stages: vec![Stage::Segment, Stage::Classify, Stage::Coincidence],
        model: Some(Arc::new(model)),
        coincidence_threshold: 600.0,
        ..BatchJob::segment("determinism", tasks, 1, 0)
    };
    let fingerprint = |workers: usize| -> Result<Vec<(GridPos, Vec<u32>, String)>, String> {
        let out = run_batch_with(&job, &ThreadPoolExecutor::new(workers)).map_err(|e| e.to_string())?;
        if !out.failures.is_empty() || out.results.len() != 25 {
            return Err(format!("{} results, {} failures", out.results.len(), out.failures.len()));
        }
        Ok(out
            .results
            .into_values()
            .map(|r| {
                let text = serde_json::to_string(&(&r.regions, &r.coincidence)).expect("serialize");
                (r.pos, r.labels.labels.into_vec(), text)
            })
            .collect())
    };
    let one = fingerprint(1)?;
    let regions: usize = one.iter().map(|(_, _, t)| t.matches("\"label\"").count()).sum();
    let mut same = Vec::new();
    for w in [2, 8] {
        same.push(fingerprint(w)? == one);
    }
    check(
        same.iter().all(|&s| s),
        format!("25 blocks, {regions} regions and flags; identical for 2 and 8 workers: {same:?}"),
    )
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("stitching exactness", stitching_exactness),
        ("stitching robustness", stitching_robustness),
        ("segmentation recall", segmentation_recall),
        ("classifier AUC", classifier_auc),
        ("weak scaling", weak_scaling),
        ("store round trip", store_round_trip),
        ("revision safety", revision_safety),
        ("annotation format round trip", format_round_trip),
        ("batch determinism", batch_determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {}: PASS {name}: {detail} [{secs:.1} s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL {name}: {detail} [{secs:.1} s]", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
