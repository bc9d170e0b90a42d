use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_neurovol"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Server(Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn get(url: &str) -> Value {
    let mut r = ureq::get(url).call().unwrap();
    serde_json::from_slice(&r.body_mut().read_to_vec().unwrap()).unwrap()
}

#[test]
fn pipeline_on_two_by_two_phantom() {
    let dir = tempfile::tempdir().unwrap();
    let blocks = dir.path().join("blocks");
    let work = dir.path().join("work");
    let store = dir.path().join("store");

    ok(&["--seed", "4", "gen-phantom", "--out", s(&blocks)]);
    assert!(blocks.join("block_r1_c1_dapi.nvb").is_file());
    ok(&["segment", "--block-dir", s(&blocks), "--out", s(&work)]);
    ok(&["stitch", "--block-dir", s(&blocks), "--segmentation", s(&work), "--out", s(&work)]);
    let plan: Value = serde_json::from_str(&std::fs::read_to_string(work.join("plan.json")).unwrap()).unwrap();
    assert_eq!(plan["column_overlaps"], serde_json::json!([6]));
    assert_eq!(plan["row_overlaps"], serde_json::json!([5]));
    let ingest: Value = serde_json::from_str(&ok(&[
        "--json", "ingest", "--root", s(&store), "--dataset", "phantom", "--input", s(&work),
    ]))
    .unwrap();
    assert_eq!(ingest["channels"], serde_json::json!(["dapi", "cfos"]));

    let mut child = bin()
        .args(["serve", "--port", "0", "--root", s(&store)])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let _server = Server(child);
    let url = line.trim().strip_prefix("listening on ").unwrap().to_string();

    let ids = get(&format!("{url}/datasets"));
    assert_eq!(ids, serde_json::json!(["phantom", "phantom_labels"]));
    let info = get(&format!("{url}/d/phantom/info"));
    assert_eq!(info["channels"], serde_json::json!(["dapi", "cfos"]));
    assert_eq!(info["annotation_layers"][0]["name"], "centroids");
    let layer = get(&format!("{url}/d/phantom/ann/centroids"));
    assert_eq!(layer["revision"], 1);
    let n = layer["annotations"].as_array().unwrap().len();
    assert_eq!(Some(n as u64), ingest["centroids"].as_u64());
    assert!(n >= 20, "{n} centroids");
    let labels = get(&format!("{url}/d/phantom_labels/info"));
    assert_eq!(labels["type"], "segmentation");
}

#[test]
fn bench_writes_one_row_per_count() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("report.csv");
    ok(&["bench", "--counts", "1,4", "--workers", "4", "--extent", "32", "--runs", "1", "--out", s(&csv)]);
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0], "volumes,voxels,workers,wall_s,voxels_per_s,overhead_pct");
    assert!(lines[1].starts_with("1,32768,1,"));
    assert!(lines[2].starts_with("4,131072,4,"));
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing");
    let out = run(&["segment", "--block-dir", s(&missing), "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no such directory"));
    assert_eq!(run(&["segment", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(run(&["segment"]).status.code(), Some(2));
    assert_eq!(run(&[]).status.code(), Some(2));
    assert_eq!(run(&["export", "--root", s(&missing), "--dataset", "d"]).status.code(), Some(2));
    assert_eq!(run(&["classify", "cv"]).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("store")).unwrap();
    let out = run(&["export", "--root", s(&dir.path().join("store")), "--dataset", "d"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn dumped_config_reproduces_run() {
    let dir = tempfile::tempdir().unwrap();
    let blocks = dir.path().join("blocks");
    ok(&["--seed", "9", "gen-phantom", "--out", s(&blocks), "--rows", "1", "--cols", "2"]);

    let first = dir.path().join("first");
    let args = ["--seed", "9", "segment", "--block-dir", s(&blocks), "--out", s(&first), "--sigma1", "1.8"];
    ok(&args);
    let mut dump_args = vec!["--dump-config"];
    dump_args.extend_from_slice(&args);
    let cfg_text = ok(&dump_args);
    let cfg_path = dir.path().join("config.json");
    let second = dir.path().join("second");
    let mut cfg: Value = serde_json::from_str(&cfg_text).unwrap();
    assert_eq!(cfg["segmentation"]["sigma1"], 1.8);
    assert_eq!(cfg["seed"], 9);
    cfg["paths"]["output_dir"] = Value::String(s(&second).into());
    std::fs::write(&cfg_path, serde_json::to_string(&cfg).unwrap()).unwrap();
    ok(&["--config", s(&cfg_path), "segment"]);

    for f in ["regions.json", "labels_r0_c0.nvl", "labels_r0_c1.nvl"] {
        assert_eq!(std::fs::read(first.join(f)).unwrap(), std::fs::read(second.join(f)).unwrap(), "{f}");
    }
    let redumped: Value = serde_json::from_str(&ok(&["--config", s(&cfg_path), "--dump-config"])).unwrap();
    assert_eq!(redumped, cfg);
}

#[test]
fn default_seed_is_fixed() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["gen-phantom", "--out", s(&a), "--rows", "1", "--cols", "1"]);
    ok(&["gen-phantom", "--out", s(&b), "--rows", "1", "--cols", "1"]);
    assert_eq!(
        std::fs::read(a.join("block_r0_c0_dapi.nvb")).unwrap(),
        std::fs::read(b.join("block_r0_c0_dapi.nvb")).unwrap()
    );
    let dumped: Value = serde_json::from_str(&ok(&["--dump-config"])).unwrap();
    assert_eq!(dumped["seed"], 0);
}

#[test]
fn classify_and_export() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.nvm");
    ok(&["classify", "train", "--synthetic", "--out", s(&model)]);
    assert!(std::fs::read_to_string(&model).unwrap().starts_with("NVM1"));
    let cv: Value = serde_json::from_str(&ok(&["--json", "classify", "cv", "--synthetic", "--folds", "5"])).unwrap();
    assert_eq!(cv["fold_auc"].as_array().unwrap().len(), 5);
    assert!(cv["mean_auc"].as_f64().unwrap() >= 0.97);
    let again: Value = serde_json::from_str(&ok(&["--json", "classify", "cv", "--synthetic", "--folds", "5"])).unwrap();
    assert_eq!(cv, again);

    let blocks = dir.path().join("blocks");
    let work = dir.path().join("work");
    let store = dir.path().join("store");
    ok(&["gen-phantom", "--out", s(&blocks), "--rows", "1", "--cols", "1"]);
    ok(&["segment", "--block-dir", s(&blocks), "--out", s(&work)]);
    ok(&["stitch", "--block-dir", s(&blocks), "--segmentation", s(&work), "--out", s(&work)]);
    ok(&["ingest", "--root", s(&store), "--dataset", "one", "--input", s(&work)]);
    let csv = ok(&["export", "--root", s(&store), "--dataset", "one", "--format", "csv"]);
    assert!(csv.starts_with("id,kind,class,provenance,point_index,x,y,z\n"));
    let file = dir.path().join("export.json");
    ok(&["export", "--root", s(&store), "--dataset", "one", "--out", s(&file), "--rev", "1"]);
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(&file).unwrap()).unwrap();
    assert_eq!(doc["revision"], 1);
    assert_eq!(run(&["export", "--root", s(&store), "--dataset", "one", "--format", "xml"]).status.code(), Some(2));
}
