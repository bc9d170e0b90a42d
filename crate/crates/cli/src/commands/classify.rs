use neurovol::classify::synthetic::acceptance_set;
use neurovol::classify::{cross_validate, encode_model, retrain_from_annotations, train_svm};
use neurovol::volume::PhantomTruth;
use neurovol::{CellClass, FeatureVector, RegionRecord};
use serde::Deserialize;
use serde_json::json;

use super::{open_store, read_json, Report};
use crate::config::PipelineConfig;
use crate::{ClassifyCommand, ExampleSource, UsageError};

/// Regions further than this from every true centre stay unlabelled.
const TRUTH_MATCH_RADIUS: f64 = 3.0;

#[derive(Deserialize)]
struct Example {
    features: FeatureVector,
    class: CellClass,
}

/// Labels segmented regions with the class of the nearest phantom nucleus.
pub fn label_from_truth(truth: &PhantomTruth, regions: &[RegionRecord]) -> (Vec<FeatureVector>, Vec<CellClass>) {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for r in regions {
        let nearest = truth
            .nuclei_in_block(r.block)
            .into_iter()
            .map(|(n, c)| {
                let d2: f64 = (0..3).map(|a| (c[a] - r.centroid[a]).powi(2)).sum();
                (d2, n.class)
            })
            .min_by(|a, b| a.0.total_cmp(&b.0));
        if let Some((d2, class)) = nearest {
            if d2.sqrt() <= TRUTH_MATCH_RADIUS {
                xs.push(r.features);
                ys.push(class);
            }
        }
    }
    (xs, ys)
}

fn examples(src: &ExampleSource, cfg: &PipelineConfig) -> anyhow::Result<(Vec<FeatureVector>, Vec<CellClass>)> {
    if src.synthetic {
        let set = acceptance_set(cfg.seed);
        return Ok((set.features, set.labels));
    }
    if let Some(p) = &src.examples {
        let ex: Vec<Example> = read_json(p)?;
        return Ok(ex.into_iter().map(|e| (e.features, e.class)).unzip());
    }
    if let (Some(t), Some(r)) = (&src.truth, &src.regions) {
        let truth: PhantomTruth = read_json(t)?;
        let regions: Vec<RegionRecord> = read_json(r)?;
        return Ok(label_from_truth(&truth, &regions));
    }
    Err(UsageError("give one of --synthetic, --examples or --truth with --regions".into()).into())
}

fn count(ys: &[CellClass], class: CellClass) -> usize {
    ys.iter().filter(|&&y| y == class).count()
}

pub fn run(cmd: ClassifyCommand, cfg: &PipelineConfig) -> anyhow::Result<Report> {
    let c = cfg.svm.c;
    match cmd {
        ClassifyCommand::Train(a) => {
            let (xs, ys) = examples(&a.source, cfg)?;
            let model = train_svm(&xs, &ys, c, cfg.seed)?;
            std::fs::write(&a.out, encode_model(&model))?;
            let (neuron, glia) = (count(&ys, CellClass::Neuron), count(&ys, CellClass::Glia));
            Ok(Report::new(
                format!("trained on {neuron} neuron and {glia} glia examples; model written to {}\n", a.out.display()),
                json!({ "neuron": neuron, "glia": glia, "c": c, "seed": cfg.seed, "out": a.out }),
            ))
        }
        ClassifyCommand::Cv(a) => {
            let (xs, ys) = examples(&a.source, cfg)?;
            let report = cross_validate(&xs, &ys, cfg.svm.folds, c, cfg.seed)?;
            let folds: Vec<String> = report.fold_auc.iter().map(|v| format!("{v:.4}")).collect();
            Ok(Report::new(
                format!(
                    "{}-fold AUC {}\nmean AUC {:.4}\n",
                    cfg.svm.folds,
                    folds.join(" "),
                    report.mean_auc
                ),
                json!({ "fold_auc": report.fold_auc, "mean_auc": report.mean_auc, "seed": report.seed }),
            ))
        }
        ClassifyCommand::Retrain(a) => {
            let store = open_store(cfg)?;
            let out = retrain_from_annotations(&store, &a.dataset, &a.layer, c, cfg.seed)?;
            Ok(Report::new(
                format!(
                    "model {} from revision {} ({} examples, {} unmatched points), mean AUC {:.4}\n",
                    out.version, out.revision, out.examples, out.unmatched, out.report.mean_auc
                ),
                json!({
                    "model_version": out.version,
                    "revision": out.revision,
                    "examples": out.examples,
                    "unmatched": out.unmatched,
                    "fold_auc": out.report.fold_auc,
                    "mean_auc": out.report.mean_auc,
                }),
            ))
        }
    }
}
