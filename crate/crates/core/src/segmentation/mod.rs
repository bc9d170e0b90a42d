//! Nuclei segmentation: difference of Gaussians, regional-maximum seeds,
//! marker-controlled watershed on the negated response, region extraction.

mod blur;
mod regions;
mod seeds;
mod watershed;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{Extents, Volume, VolumeBlock};

pub use blur::{blur_voxels, gaussian_blur_3d, gaussian_kernel, KERNEL_TRUNCATE};
pub use regions::{extract_regions, RegionRecord};
pub use seeds::detect_seeds;
pub use watershed::watershed_3d;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegParams {
    /// Inner Gaussian scale, micrometers.
    pub sigma1: f64,
    /// Outer Gaussian scale, micrometers.
    pub sigma2: f64,
    /// DoG response a seed must exceed; also bounds the flooded mask.
    pub seed_threshold: f32,
    pub min_region_voxels: usize,
}

impl Default for SegParams {
    fn default() -> Self {
        SegParams {
            sigma1: 2.0,
            sigma2: 3.2,
            seed_threshold: 100.0,
            min_region_voxels: 30,
        }
    }
}

impl SegParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma1 > 0.0 && self.sigma1 < self.sigma2 && self.sigma2.is_finite()) {
            return Err(Error::invalid(format!(
                "need 0 < sigma1 < sigma2, got {} and {}",
                self.sigma1, self.sigma2
            )));
        }
        if self.min_region_voxels < 1 {
            return Err(Error::invalid("min_region_voxels must be at least 1"));
        }
        if !self.seed_threshold.is_finite() {
            return Err(Error::invalid("seed threshold must be finite"));
        }
        Ok(())
    }
}

/// Per-voxel region ids; 0 is background.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelVolume {
    pub labels: Volume<u32>,
}

impl LabelVolume {
    pub fn empty(extents: Extents) -> Self {
        LabelVolume {
            labels: Volume::filled(extents, 0),
        }
    }

    pub fn extents(&self) -> Extents {
        self.labels.extents()
    }

    pub fn max_label(&self) -> u32 {
        self.labels.as_slice().iter().copied().max().unwrap_or(0)
    }
}

/// `blur(sigma1) - blur(sigma2)`; bright blobs near `sigma1` give positive peaks.
///
/// Parameters are not validated here, so equal sigmas yield zeros.
pub fn difference_of_gaussians(block: &VolumeBlock, p: &SegParams) -> Result<Volume<f32>> {
    let mut fine = gaussian_blur_3d(block, p.sigma1)?;
    let coarse = gaussian_blur_3d(block, p.sigma2)?;
    for (f, c) in fine.as_mut_slice().iter_mut().zip(coarse.as_slice()) {
        *f -= c;
    }
    Ok(fine)
}

/// Full per-block segmentation: DoG, seeds, watershed, extraction.
pub fn segment_block(block: &VolumeBlock, p: &SegParams) -> Result<(LabelVolume, Vec<RegionRecord>)> {
    p.validate()?;
    let dog = difference_of_gaussians(block, p)?;
    let seeds = detect_seeds(&dog, p.seed_threshold);
    if seeds.is_empty() {
        return Ok((LabelVolume::empty(block.extents()), Vec::new()));
    }
    let relief = dog.map(|v| -v);
    let mut labels = watershed_3d(&relief, &seeds, Some(-p.seed_threshold))?;
    let regions = extract_regions(&mut labels, block, p.min_region_voxels)?;
    Ok((labels, regions))
}
