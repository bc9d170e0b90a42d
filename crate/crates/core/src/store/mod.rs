//! On-disk chunked volumes and revisioned annotation layers.
//!
//! Layout under the store root:
//!
//! ```text
//! {dataset}/info.json
//! {dataset}/scales/{key}/{x0}-{x1}_{y0}-{y1}_{z0}-{z1}
//! {dataset}/ann/{layer}/HEAD
//! {dataset}/ann/{layer}/rev-{n}/revision.json
//! {dataset}/ann/{layer}/rev-{n}/{bx}_{by}_{bz}.json
//! {dataset}/regions.json
//! {dataset}/models/model-{v}.nvm
//! ```

mod annotations;
mod chunks;
mod formats;
mod manifest;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

pub use annotations::{ChangeSet, Revision, RevisionSelector};
pub use chunks::{downsample, IngestOptions};
pub use formats::{
    export_csv, export_json, import_csv, import_json, ExportFormat, ExportedAnnotation, ExportedLayer,
};
pub use manifest::{
    next_factors, AnnotationLayerInfo, DataType, DatasetManifest, ScaleInfo, VolumeType,
    DEFAULT_ANNOTATION_BLOCK, DEFAULT_CHUNK_SIZE, MANIFEST_TYPE,
};

use crate::annotation::AnnotationKind;
use crate::classify::{decode_model, encode_model, SvmModel};
use crate::error::{Error, Result};
use crate::segmentation::RegionRecord;

/// Handle to a store root. Cheap to clone; clones share the manifest lock.
#[derive(Clone, Debug)]
pub struct Store {
    root: PathBuf,
    manifest_lock: Arc<Mutex<()>>,
}

/// Dataset ids, layer names and scale keys become path components.
pub fn validate_name(kind: &str, name: &str) -> Result<()> {
    let ok = !name.is_empty()
        && !name.starts_with('.')
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'));
    if ok {
        Ok(())
    } else {
        Err(Error::invalid(format!("bad {kind} name {name:?}")))
    }
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Writes through a uniquely named temporary file and renames it into place.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let n = TMP_COUNTER.fetch_add(1, Ordering::Relaxed);
    let file_name = path.file_name().and_then(|s| s.to_str()).unwrap_or("file");
    let tmp = path.with_file_name(format!(".{file_name}.{}.{n}.tmp", std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn not_found_io(e: std::io::Error, what: impl FnOnce() -> String) -> Error {
    if e.kind() == std::io::ErrorKind::NotFound {
        Error::NotFound(what())
    } else {
        e.into()
    }
}

impl Store {
    /// Opens a store root, creating the directory if needed.
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root)?;
        Ok(Store {
            root,
            manifest_lock: Arc::default(),
        })
    }

    /// Opens an existing store root.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        if !root.is_dir() {
            return Err(Error::not_found(format!("store root {}", root.display())));
        }
        Ok(Store {
            root,
            manifest_lock: Arc::default(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn dataset_dir(&self, dataset: &str) -> PathBuf {
        self.root.join(dataset)
    }

    fn manifest_path(&self, dataset: &str) -> PathBuf {
        self.dataset_dir(dataset).join("info.json")
    }

    fn scale_dir(&self, dataset: &str, key: &str) -> PathBuf {
        self.dataset_dir(dataset).join("scales").join(key)
    }

    fn layer_dir(&self, dataset: &str, layer: &str) -> PathBuf {
        self.dataset_dir(dataset).join("ann").join(layer)
    }

    fn create_dataset_dir(&self, dataset: &str) -> Result<()> {
        validate_name("dataset", dataset)?;
        std::fs::create_dir_all(self.dataset_dir(dataset))?;
        Ok(())
    }

    /// Dataset ids with a manifest, sorted.
    pub fn list_datasets(&self) -> Result<Vec<String>> {
        let mut ids = Vec::new();
        for entry in std::fs::read_dir(&self.root)? {
            let entry = entry?;
            let Some(name) = entry.file_name().to_str().map(str::to_owned) else {
                continue;
            };
            if validate_name("dataset", &name).is_ok() && entry.path().join("info.json").is_file() {
                ids.push(name);
            }
        }
        ids.sort();
        Ok(ids)
    }

    /// The manifest file exactly as stored.
    pub fn manifest_bytes(&self, dataset: &str) -> Result<Vec<u8>> {
        validate_name("dataset", dataset).map_err(|_| Error::not_found(format!("dataset {dataset:?}")))?;
        std::fs::read(self.manifest_path(dataset))
            .map_err(|e| not_found_io(e, || format!("dataset {dataset:?}")))
    }

    pub fn manifest(&self, dataset: &str) -> Result<DatasetManifest> {
        Ok(serde_json::from_slice(&self.manifest_bytes(dataset)?)?)
    }

    fn manifest_opt(&self, dataset: &str) -> Result<Option<DatasetManifest>> {
        match self.manifest(dataset) {
            Ok(m) => Ok(Some(m)),
            Err(Error::NotFound(_)) => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn write_manifest(&self, manifest: &DatasetManifest) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(manifest)?;
        bytes.push(b'\n');
        write_atomic(&self.manifest_path(&manifest.id), &bytes)
    }

    /// Registers an annotation layer. Re-creating an identical layer is a no-op.
    pub fn create_layer(
        &self,
        dataset: &str,
        name: &str,
        kind: AnnotationKind,
        block_size: [usize; 3],
    ) -> Result<AnnotationLayerInfo> {
        validate_name("layer", name)?;
        if block_size.contains(&0) {
            return Err(Error::invalid("annotation block size must be positive"));
        }
        let _guard = self.manifest_lock.lock().expect("manifest lock poisoned");
        let mut manifest = self.manifest(dataset)?;
        let info = AnnotationLayerInfo {
            name: name.to_string(),
            kind,
            block_size,
        };
        if let Ok(existing) = manifest.layer(name) {
            return if *existing == info {
                Ok(info)
            } else {
                Err(Error::Conflict(format!("layer {name:?} exists with different settings")))
            };
        }
        let dir = self.layer_dir(dataset, name);
        std::fs::create_dir_all(&dir)?;
        write_atomic(&dir.join("HEAD"), b"0\n")?;
        manifest.annotation_layers.push(info.clone());
        self.write_manifest(&manifest)?;
        Ok(info)
    }

    /// Stores the segmented regions used to join reviewed labels to features.
    pub fn write_regions(&self, dataset: &str, regions: &[RegionRecord]) -> Result<()> {
        self.manifest(dataset)?;
        let bytes = serde_json::to_vec(regions)?;
        write_atomic(&self.dataset_dir(dataset).join("regions.json"), &bytes)
    }

    pub fn read_regions(&self, dataset: &str) -> Result<Vec<RegionRecord>> {
        self.manifest(dataset)?;
        let bytes = std::fs::read(self.dataset_dir(dataset).join("regions.json"))
            .map_err(|e| not_found_io(e, || format!("regions of dataset {dataset:?}")))?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    fn model_dir(&self, dataset: &str) -> PathBuf {
        self.dataset_dir(dataset).join("models")
    }

    /// Model versions present for a dataset, ascending.
    pub fn model_versions(&self, dataset: &str) -> Result<Vec<u64>> {
        self.manifest(dataset)?;
        let dir = self.model_dir(dataset);
        if !dir.is_dir() {
            return Ok(Vec::new());
        }
        let mut versions: Vec<u64> = std::fs::read_dir(&dir)?
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().to_str()?.to_owned();
                name.strip_prefix("model-")?.strip_suffix(".nvm")?.parse().ok()
            })
            .collect();
        versions.sort_unstable();
        Ok(versions)
    }

    /// Persists `model` under the next free version, which is written into
    /// the model and returned. Concurrent savers never share a version.
    pub fn save_model(&self, dataset: &str, model: &mut SvmModel) -> Result<u64> {
        let dir = self.model_dir(dataset);
        std::fs::create_dir_all(&dir)?;
        let mut version = self.model_versions(dataset)?.last().copied().unwrap_or(0) + 1;
        loop {
            model.version = version;
            let path = dir.join(format!("model-{version}.nvm"));
            match std::fs::OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(mut f) => {
                    f.write_all(encode_model(model).as_bytes())?;
                    f.sync_all()?;
                    return Ok(version);
                }
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => version += 1,
                Err(e) => return Err(e.into()),
            }
        }
    }

    pub fn load_model(&self, dataset: &str, version: u64) -> Result<SvmModel> {
        let path = self.model_dir(dataset).join(format!("model-{version}.nvm"));
        let text = std::fs::read_to_string(&path)
            .map_err(|e| not_found_io(e, || format!("model {version} of dataset {dataset:?}")))?;
        decode_model(&text)
    }

    pub fn latest_model(&self, dataset: &str) -> Result<Option<SvmModel>> {
        match self.model_versions(dataset)?.last() {
            Some(&v) => self.load_model(dataset, v).map(Some),
            None => Ok(None),
        }
    }
}
