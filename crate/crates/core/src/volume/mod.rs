//! Dense voxel arrays, tile geometry, and the synthetic acquisition model.
//!
//! Every volume in the crate is stored x-fastest, then y, then z, so linear
//! index `i = x + nx * (y + ny * z)`.

mod format;
mod grid;
mod phantom;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use format::{
    block_file_name, parse_block_file_name, read_block, read_labels, write_block, write_labels,
};
pub use grid::{make_grid_layout, GridLayout, GridPos};
pub use phantom::{
    generate_phantom, Nucleus, Phantom, PhantomSpec, PhantomTile, PhantomTruth, ACTIVITY_CHANNEL,
    NUCLEAR_CHANNEL,
};

/// Voxel counts along x, y and z.
pub type Extents = [usize; 3];

/// Dense 3D array in x-fastest order.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume<T> {
    extents: Extents,
    data: Vec<T>,
}

impl<T: Copy> Volume<T> {
    pub fn new(extents: Extents, data: Vec<T>) -> Result<Self> {
        let expected = voxel_count(extents);
        if data.len() != expected {
            return Err(Error::invalid(format!(
                "voxel buffer has {} elements, extents {:?} need {}",
                data.len(),
                extents,
                expected
            )));
        }
        Ok(Volume { extents, data })
    }

    pub fn filled(extents: Extents, value: T) -> Self {
        Volume {
            extents,
            data: vec![value; voxel_count(extents)],
        }
    }

    pub fn from_fn(extents: Extents, mut f: impl FnMut(usize, usize, usize) -> T) -> Self {
        let [nx, ny, nz] = extents;
        let mut data = Vec::with_capacity(voxel_count(extents));
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    data.push(f(x, y, z));
                }
            }
        }
        Volume { extents, data }
    }

    #[inline]
    pub fn extents(&self) -> Extents {
        self.extents
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.extents[0] * (y + self.extents[1] * z)
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let [nx, ny, _] = self.extents;
        [index % nx, (index / nx) % ny, index / (nx * ny)]
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> T {
        self.data[self.index(x, y, z)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, value: T) {
        let i = self.index(x, y, z);
        self.data[i] = value;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn map<U: Copy>(&self, f: impl FnMut(T) -> U) -> Volume<U> {
        Volume {
            extents: self.extents,
            data: self.data.iter().copied().map(f).collect(),
        }
    }

    /// Copies the box `[origin, origin + extents)`; the box must lie inside.
    pub fn subvolume(&self, origin: [usize; 3], extents: Extents) -> Result<Volume<T>> {
        for axis in 0..3 {
            if origin[axis] + extents[axis] > self.extents[axis] {
                return Err(Error::invalid(format!(
                    "box at {:?} with extents {:?} exceeds volume {:?}",
                    origin, extents, self.extents
                )));
            }
        }
        let mut data = Vec::with_capacity(voxel_count(extents));
        for z in 0..extents[2] {
            for y in 0..extents[1] {
                let start = self.index(origin[0], origin[1] + y, origin[2] + z);
                data.extend_from_slice(&self.data[start..start + extents[0]]);
            }
        }
        Ok(Volume { extents, data })
    }

    /// Writes `src` into this volume with its origin at `origin`.
    pub fn paste(&mut self, origin: [usize; 3], src: &Volume<T>) -> Result<()> {
        let ext = src.extents;
        for axis in 0..3 {
            if origin[axis] + ext[axis] > self.extents[axis] {
                return Err(Error::invalid(format!(
                    "pasting {:?} at {:?} exceeds volume {:?}",
                    ext, origin, self.extents
                )));
            }
        }
        for z in 0..ext[2] {
            for y in 0..ext[1] {
                let dst = self.index(origin[0], origin[1] + y, origin[2] + z);
                let s = src.index(0, y, z);
                self.data[dst..dst + ext[0]].copy_from_slice(&src.data[s..s + ext[0]]);
            }
        }
        Ok(())
    }
}

#[inline]
pub fn voxel_count(extents: Extents) -> usize {
    extents[0] * extents[1] * extents[2]
}

/// Physical voxel pitch in micrometers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Resolution {
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
}

impl Resolution {
    pub fn new(dx: f64, dy: f64, dz: f64) -> Result<Self> {
        let res = Resolution { dx, dy, dz };
        res.validate()?;
        Ok(res)
    }

    pub const fn isotropic_unit() -> Self {
        Resolution {
            dx: 1.0,
            dy: 1.0,
            dz: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.dx, self.dy, self.dz]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "resolution must be strictly positive, got {self:?}"
            )))
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.dx, self.dy, self.dz]
    }

    pub fn voxel_volume(&self) -> f64 {
        self.dx * self.dy * self.dz
    }
}

impl Default for Resolution {
    fn default() -> Self {
        Resolution::isotropic_unit()
    }
}

pub fn voxel_to_physical(coord: [f64; 3], res: &Resolution) -> [f64; 3] {
    [coord[0] * res.dx, coord[1] * res.dy, coord[2] * res.dz]
}

/// One 16-bit image volume acquired at a grid position.
#[derive(Clone, Debug, PartialEq)]
pub struct VolumeBlock {
    pub voxels: Volume<u16>,
    pub channel: String,
    pub grid_pos: GridPos,
    pub resolution: Resolution,
}

impl VolumeBlock {
    pub fn new(
        voxels: Volume<u16>,
        channel: impl Into<String>,
        grid_pos: GridPos,
        resolution: Resolution,
    ) -> Result<Self> {
        resolution.validate()?;
        let channel = channel.into();
        if channel.is_empty() || channel.contains(char::is_whitespace) {
            return Err(Error::invalid(format!(
                "channel name must be non-empty without whitespace, got {channel:?}"
            )));
        }
        Ok(VolumeBlock {
            voxels,
            channel,
            grid_pos,
            resolution,
        })
    }

    pub fn extents(&self) -> Extents {
        self.voxels.extents()
    }
}

impl fmt::Display for VolumeBlock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [nx, ny, nz] = self.extents();
        write!(
            f,
            "{} block {} ({}x{}x{})",
            self.channel, self.grid_pos, nx, ny, nz
        )
    }
}
