//! Point and polyline annotations, the unit of human review.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::GridPos;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnnotationKind {
    Point,
    Polyline,
}

impl AnnotationKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            AnnotationKind::Point => "point",
            AnnotationKind::Polyline => "polyline",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "point" => Ok(AnnotationKind::Point),
            "polyline" => Ok(AnnotationKind::Polyline),
            other => Err(Error::invalid(format!("unknown annotation kind {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Algorithm,
    Human,
}

impl Provenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::Algorithm => "algorithm",
            Provenance::Human => "human",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "algorithm" => Ok(Provenance::Algorithm),
            "human" => Ok(Provenance::Human),
            other => Err(Error::invalid(format!("unknown provenance {other:?}"))),
        }
    }
}

/// Well-known class labels. Any other non-empty string is accepted as a
/// custom class.
pub mod classes {
    pub const NEURON: &str = "neuron";
    pub const GLIA: &str = "glia";
    pub const CENTROID: &str = "centroid";
    pub const AXON: &str = "axon";
    pub const ACTIVE: &str = "active";
    pub const INACTIVE: &str = "inactive";
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub id: String,
    pub kind: AnnotationKind,
    /// Voxel coordinates in the stitched frame.
    pub coords: Vec<[f64; 3]>,
    pub class: String,
    pub provenance: Provenance,
    /// Annotation block holding the first coordinate; filled in by the store.
    #[serde(default)]
    pub block: String,
    #[serde(default)]
    pub deleted: bool,
}

impl Annotation {
    pub fn point(id: impl Into<String>, at: [f64; 3], class: impl Into<String>, provenance: Provenance) -> Self {
        Annotation {
            id: id.into(),
            kind: AnnotationKind::Point,
            coords: vec![at],
            class: class.into(),
            provenance,
            block: String::new(),
            deleted: false,
        }
    }

    pub fn polyline(
        id: impl Into<String>,
        coords: Vec<[f64; 3]>,
        class: impl Into<String>,
        provenance: Provenance,
    ) -> Self {
        Annotation {
            id: id.into(),
            kind: AnnotationKind::Polyline,
            coords,
            class: class.into(),
            provenance,
            block: String::new(),
            deleted: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() || self.id.contains(|c: char| c.is_control()) {
            return Err(Error::invalid(format!("bad annotation id {:?}", self.id)));
        }
        if self.class.is_empty() {
            return Err(Error::invalid(format!("annotation {} has an empty class", self.id)));
        }
        match (self.kind, self.coords.len()) {
            (AnnotationKind::Point, 1) => {}
            (AnnotationKind::Polyline, n) if n >= 2 => {}
            (kind, n) => {
                return Err(Error::invalid(format!(
                    "annotation {}: {} with {n} coordinates",
                    self.id,
                    kind.as_str()
                )))
            }
        }
        if self.coords.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("annotation {} has non-finite coordinates", self.id)));
        }
        Ok(())
    }

    pub fn translate(&mut self, offset: [f64; 3]) {
        for c in &mut self.coords {
            for a in 0..3 {
                c[a] += offset[a];
            }
        }
    }
}

/// Spatial partition cell of an annotation layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockKey(pub [u64; 3]);

impl BlockKey {
    pub fn containing(coord: [f64; 3], block_size: [usize; 3]) -> Self {
        BlockKey(std::array::from_fn(|a| (coord[a] / block_size[a] as f64).floor().max(0.0) as u64))
    }

    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split('_').collect();
        if parts.len() != 3 {
            return Err(Error::invalid(format!("bad block key {s:?}")));
        }
        let mut out = [0u64; 3];
        for (slot, p) in out.iter_mut().zip(parts) {
            *slot = p
                .parse()
                .map_err(|_| Error::invalid(format!("bad block key {s:?}")))?;
        }
        Ok(BlockKey(out))
    }
}

impl fmt::Display for BlockKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}_{}", self.0[0], self.0[1], self.0[2])
    }
}

/// Id of the annotation generated for a segmented region: `r{row}c{col}l{label}`.
pub fn region_annotation_id(block: GridPos, label: u32) -> String {
    format!("r{}c{}l{}", block.row, block.col, label)
}

pub fn parse_region_annotation_id(id: &str) -> Option<(GridPos, u32)> {
    let rest = id.strip_prefix('r')?;
    let (row, rest) = rest.split_once('c')?;
    let (col, label) = rest.split_once('l')?;
    Some((
        GridPos::new(row.parse().ok()?, col.parse().ok()?),
        label.parse().ok()?,
    ))
}
