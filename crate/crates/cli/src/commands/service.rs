use std::collections::BTreeSet;
use std::io::Write;
use std::net::SocketAddr;

use neurovol::batch::{benchmark_scaling, ScalingOptions};
use neurovol::store::RevisionSelector;
use neurovol_serve::{DatasetFilter, ServerConfig};
use serde_json::json;

use super::{input_dir, open_store, Report};
use crate::config::PipelineConfig;
use crate::{BenchArgs, ExportArgs, ServeArgs};

/// Runs until interrupted. The first stdout line names the bound address
/// so callers using port 0 can find it.
pub fn serve(a: &ServeArgs, cfg: &PipelineConfig, json: bool) -> anyhow::Result<Report> {
    let root = input_dir(&cfg.paths.store_root, "--root")?;
    let mut config = ServerConfig::new(SocketAddr::new(a.bind, a.port), root);
    if !a.datasets.is_empty() {
        config.datasets = DatasetFilter::Only(a.datasets.iter().cloned().collect::<BTreeSet<_>>());
    }
    config.cors_origins = a.cors_origins.clone();

    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let handle = neurovol_serve::serve(config).await?;
        let mut out = std::io::stdout().lock();
        if json {
            writeln!(out, "{}", json!({ "url": handle.url() }))?;
        } else {
            writeln!(out, "listening on {}", handle.url())?;
        }
        out.flush()?;
        drop(out);
        tokio::signal::ctrl_c().await?;
        handle.shutdown().await?;
        anyhow::Ok(())
    })?;
    Ok(Report::new("", json!(null)))
}

pub fn bench(a: &BenchArgs, cfg: &PipelineConfig) -> anyhow::Result<Report> {
    let opts = ScalingOptions {
        extent: a.extent,
        workers: cfg.workers,
        seed: cfg.seed,
        runs: a.runs,
    };
    let report = benchmark_scaling(&a.counts, opts)?;
    let csv = report.to_csv()?;
    let mut text = String::new();
    for w in &report.warnings {
        log::warn!("{w}");
    }
    match &a.out {
        Some(p) => {
            std::fs::write(p, &csv)?;
            text.push_str(&report.throughput_table());
            text.push_str(&format!("report written to {}\n", p.display()));
        }
        None => text.push_str(&csv),
    }
    Ok(Report::new(text, &report))
}

pub fn export(a: &ExportArgs, cfg: &PipelineConfig) -> anyhow::Result<Report> {
    let store = open_store(cfg)?;
    let sel = a.rev.map_or(RevisionSelector::Head, RevisionSelector::At);
    let text = store.export_annotations(&a.dataset, &a.layer, sel, a.format)?;
    match &a.out {
        Some(p) => {
            std::fs::write(p, &text)?;
            Ok(Report::new(
                format!("wrote {}\n", p.display()),
                json!({ "out": p, "bytes": text.len() }),
            ))
        }
        None => {
            // Exports already are machine-readable.
            print!("{text}");
            Ok(Report::new("", json!(null)))
        }
    }
}
