//! Neuron/glia classification of segmented regions.

mod coincidence;
mod features;
mod metrics;
mod model_file;
mod retrain;
mod svm;
pub mod synthetic;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use coincidence::{coincidence_analysis, Activity, CoincidenceFlag};
pub use features::{compute_features, equivalent_diameter, FeatureVector, FEATURE_COUNT, FEATURE_NAMES};
pub use metrics::{cross_validate, roc_auc, stratified_folds, CvReport};
pub use model_file::{decode_model, encode_model};
pub use retrain::{retrain_from_annotations, training_examples, RetrainOutcome, MIN_EXAMPLES_PER_CLASS};
pub use svm::{predict, train_svm, train_svm_with_epochs, SvmModel, DEFAULT_C, DEFAULT_EPOCHS};

pub const DEFAULT_FOLDS: usize = 5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellClass {
    #[default]
    Unlabeled,
    Neuron,
    Glia,
}

impl CellClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            CellClass::Unlabeled => "unlabeled",
            CellClass::Neuron => "neuron",
            CellClass::Glia => "glia",
        }
    }
}

impl fmt::Display for CellClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CellClass {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "unlabeled" => Ok(CellClass::Unlabeled),
            "neuron" => Ok(CellClass::Neuron),
            "glia" => Ok(CellClass::Glia),
            other => Err(crate::Error::InvalidArgument(format!("unknown cell class {other:?}"))),
        }
    }
}

/// Predicts a class for every region in place.
pub fn classify_regions(model: &SvmModel, regions: &mut [crate::RegionRecord]) -> crate::Result<()> {
    for r in regions {
        r.class = predict(model, &r.features)?.0;
    }
    Ok(())
}
