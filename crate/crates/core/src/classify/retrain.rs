use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::metrics::{cross_validate, CvReport};
use super::svm::{train_svm, SvmModel};
use super::{CellClass, FeatureVector, DEFAULT_FOLDS};
use crate::annotation::{classes, parse_region_annotation_id, AnnotationKind};
use crate::error::{Error, Result};
use crate::store::{RevisionSelector, Store};
use crate::volume::GridPos;

pub const MIN_EXAMPLES_PER_CLASS: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrainOutcome {
    pub model: SvmModel,
    pub report: CvReport,
    pub version: u64,
    /// Annotation revision the labels came from.
    pub revision: u64,
    pub examples: usize,
    /// Neuron/glia points that matched no stored region.
    pub unmatched: usize,
}

/// Training examples from the head revision of `layer`: every point labelled
/// neuron or glia whose id names a stored region, in id order.
pub fn training_examples(
    store: &Store,
    dataset: &str,
    layer: &str,
) -> Result<(u64, Vec<FeatureVector>, Vec<CellClass>, usize)> {
    let regions = store.read_regions(dataset)?;
    let by_key: HashMap<(GridPos, u32), &FeatureVector> =
        regions.iter().map(|r| ((r.block, r.label), &r.features)).collect();
    let (revision, annotations) = store.read_annotations(dataset, layer, None, RevisionSelector::Head)?;

    let (mut xs, mut ys, mut unmatched) = (Vec::new(), Vec::new(), 0);
    for a in annotations.iter().filter(|a| a.kind == AnnotationKind::Point) {
        let class = match a.class.as_str() {
            classes::NEURON => CellClass::Neuron,
            classes::GLIA => CellClass::Glia,
            _ => continue,
        };
        match parse_region_annotation_id(&a.id).and_then(|key| by_key.get(&key)) {
            Some(f) => {
                xs.push(**f);
                ys.push(class);
            }
            None => unmatched += 1,
        }
    }
    Ok((revision, xs, ys, unmatched))
}

/// Trains and cross-validates a fresh model on the reviewed labels and
/// persists it under the next model version.
pub fn retrain_from_annotations(
    store: &Store,
    dataset: &str,
    layer: &str,
    c: f64,
    seed: u64,
) -> Result<RetrainOutcome> {
    let (revision, xs, ys, unmatched) = training_examples(store, dataset, layer)?;
    let neuron = ys.iter().filter(|&&y| y == CellClass::Neuron).count();
    let glia = ys.len() - neuron;
    let required = MIN_EXAMPLES_PER_CLASS.max(DEFAULT_FOLDS);
    if neuron < required || glia < required {
        return Err(Error::InsufficientLabels { neuron, glia, required });
    }
    let report = cross_validate(&xs, &ys, DEFAULT_FOLDS, c, seed)?;
    let mut model = train_svm(&xs, &ys, c, seed)?;
    model.training_revision = Some(revision);
    let version = store.save_model(dataset, &mut model)?;
    log::info!(
        "{dataset}: model {version} from revision {revision}, {} examples, mean AUC {:.4}",
        xs.len(),
        report.mean_auc
    );
    Ok(RetrainOutcome {
        model,
        report,
        version,
        revision,
        examples: xs.len(),
        unmatched,
    })
}
