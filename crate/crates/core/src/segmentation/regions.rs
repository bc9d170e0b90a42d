use serde::{Deserialize, Serialize};

use super::LabelVolume;
use crate::classify::{compute_features, CellClass, FeatureVector};
use crate::error::{Error, Result};
use crate::volume::{GridPos, VolumeBlock};

/// One segmented nucleus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionRecord {
    /// Tile the region was segmented in.
    pub block: GridPos,
    pub label: u32,
    /// Unweighted mean voxel coordinate.
    pub centroid: [f64; 3],
    pub voxel_count: usize,
    pub bbox_min: [usize; 3],
    pub bbox_max: [usize; 3],
    pub features: FeatureVector,
    #[serde(default)]
    pub class: CellClass,
}

#[derive(Default)]
struct Accum {
    count: usize,
    sum: [f64; 3],
    min: [usize; 3],
    max: [usize; 3],
    values: Vec<f64>,
}

/// Builds one record per label, dropping (and clearing) regions smaller than
/// `min_region_voxels`. Survivors are renumbered `1..=K` in label order.
pub fn extract_regions(
    labels: &mut LabelVolume,
    intensity: &VolumeBlock,
    min_region_voxels: usize,
) -> Result<Vec<RegionRecord>> {
    if labels.extents() != intensity.extents() {
        return Err(Error::invalid(format!(
            "label extents {:?} do not match block extents {:?}",
            labels.extents(),
            intensity.extents()
        )));
    }
    let max_label = labels.max_label() as usize;
    let mut acc: Vec<Accum> = (0..=max_label).map(|_| Accum::default()).collect();
    let lv = &labels.labels;
    let vox = intensity.voxels.as_slice();
    for (i, &l) in lv.as_slice().iter().enumerate() {
        if l == 0 {
            continue;
        }
        let c = lv.coords(i);
        let a = &mut acc[l as usize];
        if a.count == 0 {
            a.min = c;
            a.max = c;
        }
        a.count += 1;
        for axis in 0..3 {
            a.sum[axis] += c[axis] as f64;
            a.min[axis] = a.min[axis].min(c[axis]);
            a.max[axis] = a.max[axis].max(c[axis]);
        }
        a.values.push(vox[i] as f64);
    }

    let mut remap = vec![0u32; max_label + 1];
    let mut records = Vec::new();
    for (old, a) in acc.iter().enumerate().skip(1) {
        if a.count == 0 || a.count < min_region_voxels {
            continue;
        }
        let new = records.len() as u32 + 1;
        remap[old] = new;
        let n = a.count as f64;
        records.push(RegionRecord {
            block: intensity.grid_pos,
            label: new,
            centroid: [a.sum[0] / n, a.sum[1] / n, a.sum[2] / n],
            voxel_count: a.count,
            bbox_min: a.min,
            bbox_max: a.max,
            features: compute_features(&a.values, &intensity.resolution)?,
            class: CellClass::Unlabeled,
        });
    }
    for l in labels.labels.as_mut_slice() {
        *l = remap[*l as usize];
    }
    Ok(records)
}
