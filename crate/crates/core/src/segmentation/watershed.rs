use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::seeds::for_each_neighbor;
use super::LabelVolume;
use crate::error::{Error, Result};
use crate::volume::Volume;

#[derive(Debug)]
struct Entry {
    relief: f32,
    seq: u64,
    index: usize,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    // Reversed: BinaryHeap is a max-heap and we pop the lowest relief first,
    // oldest entry first among equals.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .relief
            .total_cmp(&self.relief)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Marker-controlled priority flood over `relief`.
///
/// Seed `i` receives label `i + 1`. Labels spread to unlabelled 26-neighbours
/// in order of increasing relief, ties resolved by queue insertion order.
/// With `mask_level`, only voxels whose relief is strictly below it are
/// flooded; seeds are always labelled.
pub fn watershed_3d(
    relief: &Volume<f32>,
    seeds: &[[usize; 3]],
    mask_level: Option<f32>,
) -> Result<LabelVolume> {
    if seeds.is_empty() {
        return Err(Error::invalid("watershed needs at least one seed"));
    }
    let ext = relief.extents();
    let data = relief.as_slice();
    let mut labels = vec![0u32; data.len()];
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;

    for (i, s) in seeds.iter().enumerate() {
        if (0..3).any(|a| s[a] >= ext[a]) {
            return Err(Error::invalid(format!("seed {s:?} outside volume {ext:?}")));
        }
        let idx = relief.index(s[0], s[1], s[2]);
        if labels[idx] != 0 {
            return Err(Error::invalid(format!("duplicate seed {s:?}")));
        }
        labels[idx] = i as u32 + 1;
        heap.push(Entry {
            relief: data[idx],
            seq,
            index: idx,
        });
        seq += 1;
    }

    let in_mask = |v: f32| mask_level.is_none_or(|m| v < m);
    while let Some(Entry { index, .. }) = heap.pop() {
        let label = labels[index];
        for_each_neighbor(ext, relief.coords(index), |j| {
            if labels[j] == 0 && in_mask(data[j]) {
                labels[j] = label;
                heap.push(Entry {
                    relief: data[j],
                    seq,
                    index: j,
                });
                seq += 1;
            }
        });
    }

    Ok(LabelVolume {
        labels: Volume::new(ext, labels)?,
    })
}
