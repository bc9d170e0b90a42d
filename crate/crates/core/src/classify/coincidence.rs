use serde::{Deserialize, Serialize};

use super::CellClass;
use crate::error::{Error, Result};
use crate::segmentation::{LabelVolume, RegionRecord};
use crate::volume::VolumeBlock;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activity {
    Active,
    Inactive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceFlag {
    pub label: u32,
    pub activity: Activity,
    pub mean_signal: f64,
}

/// Flags each neuron-class region active when its mean second-channel
/// intensity exceeds `threshold`. Regions of any other class are skipped.
pub fn coincidence_analysis(
    regions: &[RegionRecord],
    labels: &LabelVolume,
    second_channel: &VolumeBlock,
    threshold: f64,
) -> Result<Vec<CoincidenceFlag>> {
    if labels.extents() != second_channel.extents() {
        return Err(Error::invalid(format!(
            "second channel extents {:?} do not match label extents {:?}",
            second_channel.extents(),
            labels.extents()
        )));
    }
    let neurons: Vec<&RegionRecord> = regions
        .iter()
        .filter(|r| r.class == CellClass::Neuron)
        .collect();
    if neurons.is_empty() {
        return Ok(Vec::new());
    }
    let max_label = labels.max_label() as usize;
    let mut sums = vec![(0.0f64, 0usize); max_label + 1];
    for (&l, &v) in labels
        .labels
        .as_slice()
        .iter()
        .zip(second_channel.voxels.as_slice())
    {
        if l != 0 {
            let s = &mut sums[l as usize];
            s.0 += v as f64;
            s.1 += 1;
        }
    }
    neurons
        .into_iter()
        .map(|r| {
            let (sum, count) = sums
                .get(r.label as usize)
                .copied()
                .filter(|s| s.1 > 0)
                .ok_or_else(|| Error::invalid(format!("region {} has no voxels", r.label)))?;
            let mean_signal = sum / count as f64;
            let activity = if mean_signal > threshold {
                Activity::Active
            } else {
                Activity::Inactive
            };
            Ok(CoincidenceFlag {
                label: r.label,
                activity,
                mean_signal,
            })
        })
        .collect()
}
