use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::Resolution;

pub const FEATURE_COUNT: usize = 6;
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] =
    ["volume_um3", "diameter_um", "mean", "std", "kurtosis", "skew"];

/// Shape and intensity descriptors of one region.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub volume_um3: f64,
    /// Equivalent-sphere diameter, `(6 V / pi)^(1/3)`.
    pub diameter_um: f64,
    pub mean: f64,
    pub std: f64,
    /// Excess kurtosis.
    pub kurtosis: f64,
    pub skew: f64,
}

impl FeatureVector {
    pub fn to_array(&self) -> [f64; FEATURE_COUNT] {
        [
            self.volume_um3,
            self.diameter_um,
            self.mean,
            self.std,
            self.kurtosis,
            self.skew,
        ]
    }

    /// Wraps raw values without checking the shape invariants.
    pub fn from_array(v: [f64; FEATURE_COUNT]) -> Self {
        FeatureVector {
            volume_um3: v[0],
            diameter_um: v[1],
            mean: v[2],
            std: v[3],
            kurtosis: v[4],
            skew: v[5],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

pub fn equivalent_diameter(volume: f64) -> f64 {
    (6.0 * volume / PI).cbrt()
}

/// Features of a region given the intensities of its voxels.
///
/// Moments are population moments. With zero spread, skew and kurtosis are 0.
pub fn compute_features(intensities: &[f64], res: &Resolution) -> Result<FeatureVector> {
    if intensities.is_empty() {
        return Err(Error::invalid("cannot compute features of an empty region"));
    }
    let n = intensities.len() as f64;
    let volume = n * res.voxel_volume();
    let mean = intensities.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &v in intensities {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let std = m2.sqrt();
    // Relative cutoff: float rounding of a constant region leaves m2 ~ 1e-30 * mean^2.
    let (skew, kurtosis) = if std <= 1e-12 * mean.abs().max(1.0) {
        (0.0, 0.0)
    } else {
        (m3 / (m2 * std), m4 / (m2 * m2) - 3.0)
    };
    Ok(FeatureVector {
        volume_um3: volume,
        diameter_um: equivalent_diameter(volume),
        mean,
        std,
        kurtosis,
        skew,
    })
}
