use byteorder::{ByteOrder, LittleEndian};

use super::manifest::{
    next_factors, DataType, DatasetManifest, ScaleInfo, VolumeType, DEFAULT_CHUNK_SIZE, MANIFEST_TYPE,
};
use super::{write_atomic, Store};
use crate::error::{Error, Result};
use crate::volume::{Extents, Resolution, Volume, VolumeBlock};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IngestOptions {
    pub chunk_size: [usize; 3],
    pub num_scales: usize,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            chunk_size: DEFAULT_CHUNK_SIZE,
            num_scales: 3,
        }
    }
}

/// Mean pooling over `factors` boxes (each 1 or 2), rounding half up.
/// Boxes cut by an odd extent average over the voxels they contain.
pub fn downsample(volume: &Volume<u16>, factors: [usize; 3]) -> Result<Volume<u16>> {
    if factors.iter().any(|&f| f != 1 && f != 2) {
        return Err(Error::invalid(format!("downsample factors must be 1 or 2, got {factors:?}")));
    }
    if factors == [1, 1, 1] {
        return Ok(volume.clone());
    }
    let ext = volume.extents();
    let out_ext: Extents = std::array::from_fn(|a| ext[a].div_ceil(factors[a]));
    Ok(Volume::from_fn(out_ext, |x, y, z| {
        let mut sum = 0u64;
        let mut count = 0u64;
        for zz in z * factors[2]..((z + 1) * factors[2]).min(ext[2]) {
            for yy in y * factors[1]..((y + 1) * factors[1]).min(ext[1]) {
                for xx in x * factors[0]..((x + 1) * factors[0]).min(ext[0]) {
                    sum += volume.get(xx, yy, zz) as u64;
                    count += 1;
                }
            }
        }
        ((2 * sum + count) / (2 * count)) as u16
    }))
}

/// Label pyramids keep the first voxel of every box so ids stay valid.
fn downsample_labels(volume: &Volume<u32>, factors: [usize; 3]) -> Volume<u32> {
    let ext = volume.extents();
    let out_ext: Extents = std::array::from_fn(|a| ext[a].div_ceil(factors[a]));
    Volume::from_fn(out_ext, |x, y, z| volume.get(x * factors[0], y * factors[1], z * factors[2]))
}

fn scale_key(cumulative: [usize; 3]) -> String {
    format!("{}_{}_{}", cumulative[0], cumulative[1], cumulative[2])
}

/// Pyramid levels: scale-0 plus up to `num_scales - 1` downsampled levels.
fn pyramid<T: Copy>(
    base: &Volume<T>,
    resolution_nm: [f64; 3],
    chunk_size: [usize; 3],
    num_scales: usize,
    mut reduce: impl FnMut(&Volume<T>, [usize; 3]) -> Result<Volume<T>>,
) -> Result<Vec<(ScaleInfo, Volume<T>)>> {
    let mut levels = Vec::new();
    let mut cumulative = [1usize; 3];
    let mut current = base.clone();
    loop {
        let res: [f64; 3] = std::array::from_fn(|a| resolution_nm[a] * cumulative[a] as f64);
        let info = ScaleInfo {
            key: scale_key(cumulative),
            size: current.extents(),
            resolution: res,
            chunk_sizes: vec![chunk_size],
            encoding: "raw".into(),
            voxel_offset: [0; 3],
        };
        let factors = next_factors(current.extents(), res);
        levels.push((info, current));
        if levels.len() >= num_scales {
            break;
        }
        let Some(factors) = factors else { break };
        let next = reduce(&levels.last().expect("level").1, factors)?;
        for a in 0..3 {
            cumulative[a] *= factors[a];
        }
        current = next;
    }
    Ok(levels)
}

fn check_options(opts: &IngestOptions) -> Result<()> {
    if opts.chunk_size.contains(&0) {
        return Err(Error::invalid("chunk size must be positive"));
    }
    if opts.num_scales == 0 {
        return Err(Error::invalid("need at least one scale"));
    }
    Ok(())
}

fn chunk_extract<T: Copy>(vol: &Volume<T>, bounds: [(usize, usize); 3]) -> Result<Volume<T>> {
    vol.subvolume(
        [bounds[0].0, bounds[1].0, bounds[2].0],
        std::array::from_fn(|a| bounds[a].1 - bounds[a].0),
    )
}

fn resolution_nm(res: &Resolution) -> [f64; 3] {
    [res.dx * 1000.0, res.dy * 1000.0, res.dz * 1000.0]
}

impl Store {
    /// Writes a stitched image channel as a chunked pyramid.
    ///
    /// A new id creates the dataset. An existing uint16 dataset of the same
    /// extents gains the channel: every chunk is rewritten with the new
    /// channel appended (channel is the slowest axis inside a chunk).
    pub fn ingest_volume(
        &self,
        volume: &VolumeBlock,
        dataset: &str,
        opts: IngestOptions,
    ) -> Result<DatasetManifest> {
        check_options(&opts)?;
        let _guard = self.manifest_lock.lock().expect("manifest lock poisoned");
        let res_nm = resolution_nm(&volume.resolution);
        let existing = self.manifest_opt(dataset)?;

        let (mut manifest, prior_channels) = match existing {
            None => {
                let levels = pyramid(&volume.voxels, res_nm, opts.chunk_size, opts.num_scales, downsample)?;
                let manifest = DatasetManifest {
                    type_tag: MANIFEST_TYPE.into(),
                    id: dataset.to_string(),
                    volume_type: VolumeType::Image,
                    data_type: DataType::Uint16,
                    num_channels: 0,
                    channels: Vec::new(),
                    scales: levels.iter().map(|l| l.0.clone()).collect(),
                    annotation_layers: Vec::new(),
                };
                self.create_dataset_dir(dataset)?;
                (manifest, 0)
            }
            Some(m) => {
                if m.data_type != DataType::Uint16 {
                    return Err(Error::Conflict(format!("dataset {dataset:?} is not a uint16 image")));
                }
                if m.channel_index(&volume.channel).is_some() {
                    return Err(Error::Conflict(format!(
                        "dataset {dataset:?} already has channel {:?}",
                        volume.channel
                    )));
                }
                if m.extents() != volume.extents() || m.scales[0].resolution != res_nm {
                    return Err(Error::invalid(format!(
                        "channel {:?} does not match dataset {dataset:?} geometry",
                        volume.channel
                    )));
                }
                let n = m.num_channels;
                (m, n)
            }
        };

        let levels = pyramid(
            &volume.voxels,
            res_nm,
            manifest.scales[0].chunk_size(),
            manifest.scales.len(),
            downsample,
        )?;
        if levels.len() != manifest.scales.len()
            || levels.iter().zip(&manifest.scales).any(|(l, s)| l.0.size != s.size)
        {
            return Err(Error::invalid("channel pyramid does not match the dataset pyramid"));
        }

        for (info, vol) in &levels {
            let dir = self.scale_dir(dataset, &info.key);
            std::fs::create_dir_all(&dir)?;
            let grid = info.chunk_grid();
            for k in 0..grid[2] {
                for j in 0..grid[1] {
                    for i in 0..grid[0] {
                        let bounds = info.chunk_bounds([i, j, k]).expect("in grid");
                        let name = info.chunk_name([i, j, k]).expect("in grid");
                        let path = dir.join(&name);
                        let mut bytes = if prior_channels > 0 {
                            std::fs::read(&path)?
                        } else {
                            Vec::new()
                        };
                        let chunk = chunk_extract(vol, bounds)?;
                        let start = bytes.len();
                        bytes.resize(start + chunk.len() * 2, 0);
                        LittleEndian::write_u16_into(chunk.as_slice(), &mut bytes[start..]);
                        write_atomic(&path, &bytes)?;
                    }
                }
            }
        }

        manifest.channels.push(volume.channel.clone());
        manifest.num_channels = manifest.channels.len();
        self.write_manifest(&manifest)?;
        Ok(manifest)
    }

    /// Writes a label volume as a uint32 segmentation dataset.
    pub fn ingest_labels(
        &self,
        labels: &Volume<u32>,
        resolution: &Resolution,
        dataset: &str,
        opts: IngestOptions,
    ) -> Result<DatasetManifest> {
        check_options(&opts)?;
        let _guard = self.manifest_lock.lock().expect("manifest lock poisoned");
        if self.manifest_opt(dataset)?.is_some() {
            return Err(Error::Conflict(format!("dataset {dataset:?} already exists")));
        }
        let levels = pyramid(labels, resolution_nm(resolution), opts.chunk_size, opts.num_scales, |v, f| {
            Ok(downsample_labels(v, f))
        })?;
        self.create_dataset_dir(dataset)?;
        for (info, vol) in &levels {
            let dir = self.scale_dir(dataset, &info.key);
            std::fs::create_dir_all(&dir)?;
            let grid = info.chunk_grid();
            for k in 0..grid[2] {
                for j in 0..grid[1] {
                    for i in 0..grid[0] {
                        let chunk = chunk_extract(vol, info.chunk_bounds([i, j, k]).expect("in grid"))?;
                        let mut bytes = vec![0u8; chunk.len() * 4];
                        LittleEndian::write_u32_into(chunk.as_slice(), &mut bytes);
                        write_atomic(&dir.join(info.chunk_name([i, j, k]).expect("in grid")), &bytes)?;
                    }
                }
            }
        }
        let manifest = DatasetManifest {
            type_tag: MANIFEST_TYPE.into(),
            id: dataset.to_string(),
            volume_type: VolumeType::Segmentation,
            data_type: DataType::Uint32,
            num_channels: 1,
            channels: vec!["labels".into()],
            scales: levels.into_iter().map(|l| l.0).collect(),
            annotation_layers: Vec::new(),
        };
        self.write_manifest(&manifest)?;
        Ok(manifest)
    }

    /// Raw little-endian bytes of one chunk, all channels, channel slowest.
    pub fn read_chunk(&self, dataset: &str, scale: &str, coords: [usize; 3]) -> Result<Vec<u8>> {
        let manifest = self.manifest(dataset)?;
        let info = manifest.scale(scale)?;
        let name = info.chunk_name(coords).ok_or_else(|| {
            Error::not_found(format!("chunk {coords:?} of scale {scale:?} in {dataset:?}"))
        })?;
        self.read_chunk_file(dataset, info, &name)
    }

    /// Same as [`Store::read_chunk`] addressed by chunk file name.
    pub fn read_chunk_named(&self, dataset: &str, scale: &str, name: &str) -> Result<Vec<u8>> {
        let manifest = self.manifest(dataset)?;
        let info = manifest.scale(scale)?;
        if info.parse_chunk_name(name).is_none() {
            return Err(Error::not_found(format!("chunk {name:?} of scale {scale:?} in {dataset:?}")));
        }
        self.read_chunk_file(dataset, info, name)
    }

    fn read_chunk_file(&self, dataset: &str, info: &ScaleInfo, name: &str) -> Result<Vec<u8>> {
        let path = self.scale_dir(dataset, &info.key).join(name);
        std::fs::read(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::not_found(format!("chunk file {}", path.display())),
            _ => e.into(),
        })
    }

    /// Reassembles one uint16 channel of a scale from its chunks.
    pub fn reassemble_channel(&self, dataset: &str, scale: &str, channel: usize) -> Result<Volume<u16>> {
        let manifest = self.manifest(dataset)?;
        if manifest.data_type != DataType::Uint16 || channel >= manifest.num_channels {
            return Err(Error::invalid(format!("no uint16 channel {channel} in {dataset:?}")));
        }
        let info = manifest.scale(scale)?;
        let mut out = Volume::filled(info.size, 0u16);
        let grid = info.chunk_grid();
        for k in 0..grid[2] {
            for j in 0..grid[1] {
                for i in 0..grid[0] {
                    let b = info.chunk_bounds([i, j, k]).expect("in grid");
                    let ext: Extents = std::array::from_fn(|a| b[a].1 - b[a].0);
                    let n = ext[0] * ext[1] * ext[2];
                    let bytes = self.read_chunk(dataset, scale, [i, j, k])?;
                    if bytes.len() != n * 2 * manifest.num_channels {
                        return Err(Error::format("chunk", format!("chunk {i},{j},{k} has {} bytes", bytes.len())));
                    }
                    let mut vals = vec![0u16; n];
                    LittleEndian::read_u16_into(&bytes[channel * n * 2..(channel + 1) * n * 2], &mut vals);
                    out.paste([b[0].0, b[1].0, b[2].0], &Volume::new(ext, vals)?)?;
                }
            }
        }
        Ok(out)
    }
}
