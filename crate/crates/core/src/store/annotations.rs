//! Revisioned annotation layers.
//!
//! Every revision directory holds the block files it changed plus a
//! `revision.json` mapping each live block to the revision whose directory
//! holds its current contents. Revisions are never modified after HEAD moves
//! past them. A writer claims revision `n + 1` by creating its directory, so
//! exactly one writer wins each head value even across processes.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::{not_found_io, write_atomic, Store};
use crate::annotation::{Annotation, BlockKey};
use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ChangeSet {
    #[serde(default)]
    pub upsert: Vec<Annotation>,
    #[serde(default)]
    pub delete: Vec<String>,
}

impl ChangeSet {
    pub fn is_empty(&self) -> bool {
        self.upsert.is_empty() && self.delete.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Revision {
    pub revision: u64,
    pub parent: Option<u64>,
    pub author: String,
    /// RFC 3339, UTC.
    pub timestamp: String,
    pub upserted: Vec<String>,
    pub deleted: Vec<String>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RevisionSelector {
    #[default]
    Head,
    At(u64),
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
struct RevisionDoc {
    revision: Option<Revision>,
    /// Block key -> revision directory holding the block file.
    blocks: BTreeMap<String, u64>,
    /// Annotation id -> block key.
    index: BTreeMap<String, String>,
}

impl Store {
    fn rev_dir(&self, dataset: &str, layer: &str, n: u64) -> PathBuf {
        self.layer_dir(dataset, layer).join(format!("rev-{n}"))
    }

    /// Current head revision of a layer (0 before the first write).
    pub fn head_revision(&self, dataset: &str, layer: &str) -> Result<u64> {
        self.manifest(dataset)?.layer(layer)?;
        let path = self.layer_dir(dataset, layer).join("HEAD");
        let text = std::fs::read_to_string(&path)
            .map_err(|e| not_found_io(e, || format!("head of layer {layer:?}")))?;
        text.trim()
            .parse()
            .map_err(|_| Error::format("HEAD", format!("{:?} in {}", text.trim(), path.display())))
    }

    fn resolve(&self, dataset: &str, layer: &str, sel: RevisionSelector) -> Result<u64> {
        let head = self.head_revision(dataset, layer)?;
        match sel {
            RevisionSelector::Head => Ok(head),
            RevisionSelector::At(n) if n <= head => Ok(n),
            RevisionSelector::At(n) => Err(Error::not_found(format!(
                "revision {n} of layer {layer:?} (head is {head})"
            ))),
        }
    }

    fn read_doc(&self, dataset: &str, layer: &str, n: u64) -> Result<RevisionDoc> {
        if n == 0 {
            return Ok(RevisionDoc::default());
        }
        let path = self.rev_dir(dataset, layer, n).join("revision.json");
        let bytes = std::fs::read(&path)
            .map_err(|e| not_found_io(e, || format!("revision {n} of layer {layer:?}")))?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    fn read_block_file(&self, dataset: &str, layer: &str, holder: u64, key: &str) -> Result<Vec<Annotation>> {
        let path = self.rev_dir(dataset, layer, holder).join(format!("{key}.json"));
        let bytes = std::fs::read(&path)?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    /// Metadata of revision `n` (n ≥ 1).
    pub fn revision(&self, dataset: &str, layer: &str, n: u64) -> Result<Revision> {
        let n = self.resolve(dataset, layer, RevisionSelector::At(n))?;
        self.read_doc(dataset, layer, n)?
            .revision
            .ok_or_else(|| Error::not_found(format!("revision {n} of layer {layer:?}")))
    }

    /// Live annotations as of `sel`, optionally restricted to some blocks,
    /// sorted by id. Returns the resolved revision number too.
    pub fn read_annotations(
        &self,
        dataset: &str,
        layer: &str,
        blocks: Option<&[BlockKey]>,
        sel: RevisionSelector,
    ) -> Result<(u64, Vec<Annotation>)> {
        let n = self.resolve(dataset, layer, sel)?;
        let doc = self.read_doc(dataset, layer, n)?;
        let wanted: Option<BTreeSet<String>> = blocks.map(|b| b.iter().map(|k| k.to_string()).collect());
        let mut out = Vec::new();
        for (key, &holder) in &doc.blocks {
            if wanted.as_ref().is_some_and(|w| !w.contains(key)) {
                continue;
            }
            out.extend(self.read_block_file(dataset, layer, holder, key)?);
        }
        out.sort_by(|a, b| a.id.cmp(&b.id));
        Ok((n, out))
    }

    /// Block keys holding annotations at `sel`.
    pub fn annotation_blocks(&self, dataset: &str, layer: &str, sel: RevisionSelector) -> Result<Vec<BlockKey>> {
        let n = self.resolve(dataset, layer, sel)?;
        self.read_doc(dataset, layer, n)?
            .blocks
            .keys()
            .map(|k| BlockKey::parse(k))
            .collect()
    }

    /// Applies `changes` on top of `base`, which must be the current head.
    ///
    /// Upserting an existing id replaces it (moving it between blocks if
    /// needed); an upsert flagged `deleted` acts as a delete. An empty change
    /// set still commits a revision.
    pub fn write_annotations(
        &self,
        dataset: &str,
        layer: &str,
        changes: &ChangeSet,
        base: u64,
        author: &str,
    ) -> Result<Revision> {
        let manifest = self.manifest(dataset)?;
        let info = manifest.layer(layer)?.clone();
        let extents = manifest.extents();

        let mut upserts: BTreeMap<String, Annotation> = BTreeMap::new();
        let mut deletes: BTreeSet<String> = BTreeSet::new();
        for a in &changes.upsert {
            a.validate()?;
            for c in &a.coords {
                if (0..3).any(|ax| c[ax] < 0.0 || c[ax] >= extents[ax] as f64) {
                    return Err(Error::invalid(format!(
                        "annotation {} coordinate {c:?} outside extents {extents:?}",
                        a.id
                    )));
                }
            }
            let fresh = if a.deleted {
                deletes.insert(a.id.clone())
            } else {
                let mut a = a.clone();
                a.block = BlockKey::containing(a.coords[0], info.block_size).to_string();
                upserts.insert(a.id.clone(), a).is_none()
            };
            if !fresh {
                return Err(Error::invalid(format!("annotation {} appears twice in the change set", a.id)));
            }
        }
        for id in &changes.delete {
            if upserts.contains_key(id) || !deletes.insert(id.clone()) {
                return Err(Error::invalid(format!("annotation {id} appears twice in the change set")));
            }
        }

        let head = self.head_revision(dataset, layer)?;
        if base != head {
            return Err(Error::StaleRevision { base, head });
        }
        let mut doc = self.read_doc(dataset, layer, base)?;
        for id in &deletes {
            if !doc.index.contains_key(id) {
                return Err(Error::invalid(format!("cannot delete unknown annotation {id}")));
            }
        }

        // Blocks whose contents change in this revision.
        let mut touched: BTreeMap<String, BTreeMap<String, Annotation>> = BTreeMap::new();
        let touched_keys: BTreeSet<String> = deletes
            .iter()
            .chain(upserts.keys())
            .filter_map(|id| doc.index.get(id).cloned())
            .chain(upserts.values().map(|a| a.block.clone()))
            .collect();
        for key in touched_keys {
            let contents = match doc.blocks.get(&key) {
                Some(&holder) => self
                    .read_block_file(dataset, layer, holder, &key)?
                    .into_iter()
                    .map(|a| (a.id.clone(), a))
                    .collect(),
                None => BTreeMap::new(),
            };
            touched.insert(key, contents);
        }
        for id in deletes.iter().chain(upserts.keys()) {
            if let Some(key) = doc.index.remove(id) {
                touched.get_mut(&key).expect("touched block").remove(id);
            }
        }
        for (id, a) in &upserts {
            doc.index.insert(id.clone(), a.block.clone());
            touched.get_mut(&a.block).expect("touched block").insert(id.clone(), a.clone());
        }

        let next = base + 1;
        let dir = self.rev_dir(dataset, layer, next);
        match std::fs::create_dir(&dir) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                return Err(Error::StaleRevision { base, head: next });
            }
            Err(e) => return Err(e.into()),
        }

        let revision = Revision {
            revision: next,
            parent: (base > 0).then_some(base),
            author: author.to_string(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            upserted: upserts.keys().cloned().collect(),
            deleted: deletes.into_iter().collect(),
        };
        let mut commit = || -> Result<()> {
            for (key, contents) in &touched {
                if contents.is_empty() {
                    doc.blocks.remove(key);
                    continue;
                }
                let list: Vec<&Annotation> = contents.values().collect();
                write_atomic(&dir.join(format!("{key}.json")), &serde_json::to_vec(&list)?)?;
                doc.blocks.insert(key.clone(), next);
            }
            doc.revision = Some(revision.clone());
            write_atomic(&dir.join("revision.json"), &serde_json::to_vec(&doc)?)?;
            write_atomic(&self.layer_dir(dataset, layer).join("HEAD"), format!("{next}\n").as_bytes())
        };
        if let Err(e) = commit() {
            // Release the claim so the layer is not wedged at this head.
            let _ = std::fs::remove_dir_all(&dir);
            return Err(e);
        }
        log::debug!("{dataset}/{layer}: committed revision {next} by {author}");
        Ok(revision)
    }
}
