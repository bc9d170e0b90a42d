use serde::{Deserialize, Serialize};

use crate::annotation::AnnotationKind;
use crate::error::{Error, Result};
use crate::volume::Extents;

pub const MANIFEST_TYPE: &str = "neuroglancer_multiscale_volume";
pub const DEFAULT_CHUNK_SIZE: [usize; 3] = [64, 64, 64];
pub const DEFAULT_ANNOTATION_BLOCK: [usize; 3] = [256, 256, 256];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataType {
    Uint16,
    Uint32,
}

impl DataType {
    pub fn bytes_per_voxel(&self) -> usize {
        match self {
            DataType::Uint16 => 2,
            DataType::Uint32 => 4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VolumeType {
    Image,
    Segmentation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleInfo {
    pub key: String,
    pub size: Extents,
    /// Nanometers per voxel.
    pub resolution: [f64; 3],
    pub chunk_sizes: Vec<[usize; 3]>,
    pub encoding: String,
    pub voxel_offset: [i64; 3],
}

impl ScaleInfo {
    pub fn chunk_size(&self) -> [usize; 3] {
        self.chunk_sizes[0]
    }

    /// Number of chunks along each axis, counting truncated edge chunks.
    pub fn chunk_grid(&self) -> [usize; 3] {
        let c = self.chunk_size();
        std::array::from_fn(|a| self.size[a].div_ceil(c[a]))
    }

    /// Voxel bounds `[start, end)` of chunk `coords`, or `None` if out of range.
    pub fn chunk_bounds(&self, coords: [usize; 3]) -> Option<[(usize, usize); 3]> {
        let grid = self.chunk_grid();
        let c = self.chunk_size();
        if (0..3).any(|a| coords[a] >= grid[a]) {
            return None;
        }
        Some(std::array::from_fn(|a| {
            let start = coords[a] * c[a];
            (start, (start + c[a]).min(self.size[a]))
        }))
    }

    /// `{x0}-{x1}_{y0}-{y1}_{z0}-{z1}`
    pub fn chunk_name(&self, coords: [usize; 3]) -> Option<String> {
        let b = self.chunk_bounds(coords)?;
        Some(format!(
            "{}-{}_{}-{}_{}-{}",
            b[0].0, b[0].1, b[1].0, b[1].1, b[2].0, b[2].1
        ))
    }

    /// Chunk coordinates named by `name`; the bounds must match the grid exactly.
    pub fn parse_chunk_name(&self, name: &str) -> Option<[usize; 3]> {
        let parts: Vec<&str> = name.split('_').collect();
        if parts.len() != 3 {
            return None;
        }
        let c = self.chunk_size();
        let mut coords = [0usize; 3];
        for a in 0..3 {
            let (lo, _) = parts[a].split_once('-')?;
            let lo: usize = lo.parse().ok()?;
            if !lo.is_multiple_of(c[a]) {
                return None;
            }
            coords[a] = lo / c[a];
        }
        (self.chunk_name(coords)? == name).then_some(coords)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotationLayerInfo {
    pub name: String,
    pub kind: AnnotationKind,
    pub block_size: [usize; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    #[serde(rename = "@type")]
    pub type_tag: String,
    pub id: String,
    #[serde(rename = "type")]
    pub volume_type: VolumeType,
    pub data_type: DataType,
    pub num_channels: usize,
    pub channels: Vec<String>,
    pub scales: Vec<ScaleInfo>,
    #[serde(default)]
    pub annotation_layers: Vec<AnnotationLayerInfo>,
}

impl DatasetManifest {
    pub fn scale(&self, key: &str) -> Result<&ScaleInfo> {
        self.scales
            .iter()
            .find(|s| s.key == key)
            .ok_or_else(|| Error::not_found(format!("scale {key:?} in dataset {:?}", self.id)))
    }

    pub fn extents(&self) -> Extents {
        self.scales[0].size
    }

    pub fn layer(&self, name: &str) -> Result<&AnnotationLayerInfo> {
        self.annotation_layers
            .iter()
            .find(|l| l.name == name)
            .ok_or_else(|| {
                Error::not_found(format!("annotation layer {name:?} in dataset {:?}", self.id))
            })
    }

    pub fn channel_index(&self, channel: &str) -> Option<usize> {
        self.channels.iter().position(|c| c == channel)
    }
}

/// Downsampling factors for the next pyramid level: halve every axis whose
/// pitch is within 2x of the finest pitch, as long as it has more than one
/// voxel. Returns `None` when nothing can be halved.
pub fn next_factors(size: Extents, resolution: [f64; 3]) -> Option<[usize; 3]> {
    let finest = (0..3)
        .filter(|&a| size[a] > 1)
        .map(|a| resolution[a])
        .fold(f64::INFINITY, f64::min);
    let factors: [usize; 3] =
        std::array::from_fn(|a| if size[a] > 1 && resolution[a] < 2.0 * finest { 2 } else { 1 });
    (factors != [1, 1, 1]).then_some(factors)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scale(size: Extents, chunk: [usize; 3]) -> ScaleInfo {
        ScaleInfo {
            key: "1_1_1".into(),
            size,
            resolution: [1000.0; 3],
            chunk_sizes: vec![chunk],
            encoding: "raw".into(),
            voxel_offset: [0; 3],
        }
    }

    #[test]
    fn chunk_grid_truncates_edges() {
        let s = scale([100, 100, 100], [64, 64, 64]);
        assert_eq!(s.chunk_grid(), [2, 2, 2]);
        assert_eq!(s.chunk_bounds([1, 1, 1]), Some([(64, 100); 3]));
        assert_eq!(s.chunk_bounds([2, 0, 0]), None);
        assert_eq!(s.chunk_name([1, 0, 1]).unwrap(), "64-100_0-64_64-100");
    }

    #[test]
    fn chunk_names_parse_back() {
        let s = scale([128, 96, 40], [32, 32, 32]);
        for (i, j, k) in [(0, 0, 0), (3, 2, 1), (1, 1, 0)] {
            let name = s.chunk_name([i, j, k]).unwrap();
            assert_eq!(s.parse_chunk_name(&name), Some([i, j, k]));
        }
        assert_eq!(s.parse_chunk_name("0-32_0-32_32-64"), None);
        assert_eq!(s.parse_chunk_name("1-32_0-32_0-32"), None);
        assert_eq!(s.parse_chunk_name("junk"), None);
    }

    #[test]
    fn pyramid_factors() {
        assert_eq!(next_factors([64, 64, 64], [1.0; 3]), Some([2, 2, 2]));
        assert_eq!(next_factors([64, 64, 16], [227.0, 227.0, 1000.0]), Some([2, 2, 1]));
        assert_eq!(next_factors([64, 64, 16], [454.0, 454.0, 1000.0]), Some([2, 2, 1]));
        assert_eq!(next_factors([64, 64, 16], [908.0, 908.0, 1000.0]), Some([2, 2, 2]));
        assert_eq!(next_factors([1, 8, 1], [1.0; 3]), Some([1, 2, 1]));
        assert_eq!(next_factors([1, 1, 1], [1.0; 3]), None);
    }
}
