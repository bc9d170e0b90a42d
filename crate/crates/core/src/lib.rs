//! Batch processing and data management for gridded volumetric microscopy.
//!
//! The crate covers the whole offline side of a review-and-retrain loop:
//!
//! * [`volume`]: voxel arrays, acquisition grids, raw block files and a
//!   synthetic phantom generator.
//! * [`segmentation`]: difference-of-Gaussians seeding and marker-based 3D
//!   watershed, producing labelled nuclei.
//! * [`classify`]: per-region features, a linear SVM, ROC AUC and
//!   cross-validation, activity coincidence and retraining from reviewed
//!   annotations.
//! * [`stitching`]: pairwise overlap search and grid placement.
//! * [`batch`]: worker-pool execution of per-block pipelines and weak-scaling
//!   benchmarks.
//! * [`store`]: chunked multi-scale volumes and revisioned annotation layers
//!   on disk.

pub mod annotation;
pub mod batch;
pub mod classify;
pub mod error;
pub mod segmentation;
pub mod stitching;
pub mod store;
pub mod volume;

pub use annotation::{Annotation, AnnotationKind, Provenance};
pub use classify::{CellClass, FeatureVector, SvmModel};
pub use error::{Error, Result};
pub use segmentation::{LabelVolume, RegionRecord, SegParams};
pub use stitching::StitchPlan;
pub use store::Store;
pub use volume::{GridLayout, GridPos, Resolution, Volume, VolumeBlock};
