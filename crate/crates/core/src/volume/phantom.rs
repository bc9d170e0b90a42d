//! Synthetic two-channel tile grids with known nuclei, standing in for
//! light-sheet acquisitions.
//!
//! Nuclei are placed in one global frame and every tile is rendered from
//! that frame, so overlapping strips of neighbouring tiles carry identical
//! content until per-tile noise is added.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{make_grid_layout, Extents, GridLayout, GridPos, Resolution, Volume, VolumeBlock};
use crate::classify::CellClass;
use crate::error::{Error, Result};

pub const NUCLEAR_CHANNEL: &str = "dapi";
pub const ACTIVITY_CHANNEL: &str = "cfos";

/// Nuclei profiles are truncated at this many radii.
const PROFILE_CUTOFF: f64 = 3.0;
/// Minimum centre distance, as a multiple of the summed radii.
const SEPARATION_FACTOR: f64 = 1.5;
/// Centres keep this many radii from the faces of the whole volume. Inside
/// the grid they may sit anywhere, including overlap strips.
const EDGE_MARGIN: f64 = 2.0;
const MAX_PLACEMENT_ATTEMPTS: usize = 20_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub grid: GridLayout,
    pub block_extents: Extents,
    pub true_overlap_x: usize,
    pub true_overlap_y: usize,
    pub nuclei_per_block: usize,
    /// Gaussian profile radius range in voxels. Glia draw from the lower
    /// half of the range, neurons from the upper half.
    pub radius_range: (f64, f64),
    pub background: f64,
    pub foreground: f64,
    pub noise_sigma: f64,
    pub neuron_fraction: f64,
    /// Share of neurons that carry elevated activity-channel signal.
    pub active_fraction: f64,
    pub activity_background: f64,
    pub activity_foreground: f64,
    /// Nuclear-channel amplitude multiplier for glia (denser chromatin).
    pub glia_brightness: f64,
    pub resolution: Resolution,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            grid: make_grid_layout(1, 1, true).expect("1x1 grid"),
            block_extents: [64, 64, 64],
            true_overlap_x: 6,
            true_overlap_y: 5,
            nuclei_per_block: 6,
            radius_range: (4.0, 6.0),
            background: 500.0,
            foreground: 4000.0,
            noise_sigma: 0.0,
            neuron_fraction: 0.5,
            active_fraction: 1.0,
            activity_background: 200.0,
            activity_foreground: 2200.0,
            glia_brightness: 1.4,
            resolution: Resolution::isotropic_unit(),
        }
    }
}

impl PhantomSpec {
    /// Intensity span between background and neuron peak.
    pub fn dynamic_range(&self) -> f64 {
        self.foreground - self.background
    }

    pub fn validate(&self) -> Result<()> {
        self.resolution.validate()?;
        let [nx, ny, nz] = self.block_extents;
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(Error::invalid("block extents must be positive"));
        }
        for (name, overlap, extent) in [
            ("x", self.true_overlap_x, nx),
            ("y", self.true_overlap_y, ny),
        ] {
            let max = extent / 10;
            if overlap < 1 || overlap > max {
                return Err(Error::invalid(format!(
                    "{name} overlap {overlap} outside [1, {max}] (10% of extent {extent})"
                )));
            }
        }
        let (rmin, rmax) = self.radius_range;
        if !(rmin > 0.0 && rmin <= rmax && rmax.is_finite()) {
            return Err(Error::invalid(format!(
                "bad radius range {:?}",
                self.radius_range
            )));
        }
        if self.nuclei_per_block > 0 {
            let margin = (EDGE_MARGIN * rmax).ceil() as usize;
            if self.block_extents.iter().any(|&n| n <= 2 * margin) {
                return Err(Error::invalid(format!(
                    "nuclei of radius {rmax} do not fit in a {:?} block",
                    self.block_extents
                )));
            }
        }
        for (name, f) in [
            ("neuron_fraction", self.neuron_fraction),
            ("active_fraction", self.active_fraction),
        ] {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::invalid(format!("{name} {f} outside [0, 1]")));
            }
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::invalid("noise sigma must be non-negative"));
        }
        Ok(())
    }

    /// Global origin of a tile in the phantom frame.
    pub fn block_origin(&self, pos: GridPos) -> [usize; 3] {
        [
            pos.col * (self.block_extents[0] - self.true_overlap_x),
            pos.row * (self.block_extents[1] - self.true_overlap_y),
            0,
        ]
    }

    pub fn global_extents(&self) -> Extents {
        let [nx, ny, nz] = self.block_extents;
        [
            self.grid.cols * nx - (self.grid.cols - 1) * self.true_overlap_x,
            self.grid.rows * ny - (self.grid.rows - 1) * self.true_overlap_y,
            nz,
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Nucleus {
    pub id: usize,
    /// Tile the nucleus was placed in.
    pub home: GridPos,
    /// Centre in the global phantom frame, voxels.
    pub center: [f64; 3],
    pub radius: f64,
    pub class: CellClass,
    pub active: bool,
}

impl Nucleus {
    fn amplitude_at(&self, p: [f64; 3]) -> f64 {
        let d2: f64 = (0..3).map(|a| (p[a] - self.center[a]).powi(2)).sum();
        let cutoff = PROFILE_CUTOFF * self.radius;
        if d2 > cutoff * cutoff {
            0.0
        } else {
            (-d2 / (2.0 * self.radius * self.radius)).exp()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomTruth {
    pub spec: PhantomSpec,
    pub nuclei: Vec<Nucleus>,
}

impl PhantomTruth {
    /// Nuclei whose centre lies inside the tile, with tile-local centres.
    pub fn nuclei_in_block(&self, pos: GridPos) -> Vec<(&Nucleus, [f64; 3])> {
        let origin = self.spec.block_origin(pos);
        let ext = self.spec.block_extents;
        self.nuclei
            .iter()
            .filter_map(|n| {
                let local = [
                    n.center[0] - origin[0] as f64,
                    n.center[1] - origin[1] as f64,
                    n.center[2] - origin[2] as f64,
                ];
                let inside = (0..3).all(|a| local[a] >= 0.0 && local[a] <= (ext[a] - 1) as f64);
                inside.then_some((n, local))
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhantomTile {
    pub pos: GridPos,
    pub nuclear: VolumeBlock,
    pub activity: VolumeBlock,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Phantom {
    /// Tiles in acquisition order.
    pub tiles: Vec<PhantomTile>,
    pub truth: PhantomTruth,
}

impl Phantom {
    pub fn tile(&self, pos: GridPos) -> Option<&PhantomTile> {
        self.tiles.iter().find(|t| t.pos == pos)
    }

    pub fn nuclear_blocks(&self) -> impl Iterator<Item = &VolumeBlock> {
        self.tiles.iter().map(|t| &t.nuclear)
    }
}

pub fn generate_phantom(spec: &PhantomSpec, seed: u64) -> Result<Phantom> {
    spec.validate()?;
    let nuclei = place_nuclei(spec, seed)?;
    let truth = PhantomTruth {
        spec: spec.clone(),
        nuclei,
    };

    let mut tiles = Vec::with_capacity(spec.grid.len());
    for (index, &pos) in spec.grid.order().iter().enumerate() {
        let origin = spec.block_origin(pos);
        let (nuclear, activity) = render_tile(spec, &truth.nuclei, origin);
        let nuclear = quantize(nuclear, spec.noise_sigma, seed, 1 + 2 * index as u64)?;
        let activity = quantize(activity, spec.noise_sigma, seed, 2 + 2 * index as u64)?;
        tiles.push(PhantomTile {
            pos,
            nuclear: VolumeBlock::new(nuclear, NUCLEAR_CHANNEL, pos, spec.resolution)?,
            activity: VolumeBlock::new(activity, ACTIVITY_CHANNEL, pos, spec.resolution)?,
        });
    }
    Ok(Phantom { tiles, truth })
}

fn place_nuclei(spec: &PhantomSpec, seed: u64) -> Result<Vec<Nucleus>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    let (rmin, rmax) = spec.radius_range;
    let rmid = 0.5 * (rmin + rmax);
    let margin = (EDGE_MARGIN * rmax).ceil();
    let ext = spec.block_extents;
    let global = spec.global_extents();
    let mut nuclei: Vec<Nucleus> = Vec::new();

    for &pos in spec.grid.order() {
        let origin = spec.block_origin(pos);
        for _ in 0..spec.nuclei_per_block {
            let class = if rng.random::<f64>() < spec.neuron_fraction {
                CellClass::Neuron
            } else {
                CellClass::Glia
            };
            let active = class == CellClass::Neuron && rng.random::<f64>() < spec.active_fraction;
            let radius = match class {
                CellClass::Neuron => rng.random_range(rmid..=rmax),
                _ => rng.random_range(rmin..=rmid),
            };
            let mut placed = false;
            for _ in 0..MAX_PLACEMENT_ATTEMPTS {
                let mut center = [0.0; 3];
                for a in 0..3 {
                    let lo = (origin[a] as f64).max(margin);
                    let hi = ((origin[a] + ext[a]) as f64 - 1.0).min(global[a] as f64 - 1.0 - margin);
                    center[a] = rng.random_range(lo..=hi);
                }
                let clear = nuclei.iter().all(|n| {
                    let d2: f64 = (0..3).map(|a| (n.center[a] - center[a]).powi(2)).sum();
                    let min = SEPARATION_FACTOR * (n.radius + radius);
                    d2 >= min * min
                });
                if clear {
                    nuclei.push(Nucleus {
                        id: nuclei.len(),
                        home: pos,
                        center,
                        radius,
                        class,
                        active,
                    });
                    placed = true;
                    break;
                }
            }
            if !placed {
                return Err(Error::invalid(format!(
                    "could not place {} separated nuclei in tile {pos}",
                    spec.nuclei_per_block
                )));
            }
        }
    }
    Ok(nuclei)
}

fn render_tile(spec: &PhantomSpec, nuclei: &[Nucleus], origin: [usize; 3]) -> (Volume<f64>, Volume<f64>) {
    let ext = spec.block_extents;
    let mut nuclear = Volume::filled(ext, spec.background);
    let mut activity = Volume::filled(ext, spec.activity_background);
    let amp = spec.dynamic_range();
    let activity_amp = spec.activity_foreground - spec.activity_background;

    for n in nuclei {
        let reach = PROFILE_CUTOFF * n.radius;
        // Local index range covered by the truncated profile.
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        let mut empty = false;
        for a in 0..3 {
            let g_lo = (n.center[a] - reach).ceil().max(origin[a] as f64);
            let g_hi = (n.center[a] + reach).floor().min((origin[a] + ext[a] - 1) as f64);
            if g_hi < g_lo {
                empty = true;
                break;
            }
            lo[a] = g_lo as usize - origin[a];
            hi[a] = g_hi as usize - origin[a];
        }
        if empty {
            continue;
        }
        let dapi_amp = match n.class {
            CellClass::Glia => amp * spec.glia_brightness,
            _ => amp,
        };
        for z in lo[2]..=hi[2] {
            for y in lo[1]..=hi[1] {
                for x in lo[0]..=hi[0] {
                    let p = [
                        (origin[0] + x) as f64,
                        (origin[1] + y) as f64,
                        (origin[2] + z) as f64,
                    ];
                    let w = n.amplitude_at(p);
                    if w == 0.0 {
                        continue;
                    }
                    let i = nuclear.index(x, y, z);
                    nuclear.as_mut_slice()[i] += dapi_amp * w;
                    if n.active {
                        activity.as_mut_slice()[i] += activity_amp * w;
                    }
                }
            }
        }
    }
    (nuclear, activity)
}

fn quantize(values: Volume<f64>, noise_sigma: f64, seed: u64, stream: u64) -> Result<Volume<u16>> {
    let to_u16 = |v: f64| v.round().clamp(0.0, u16::MAX as f64) as u16;
    if noise_sigma == 0.0 {
        return Ok(values.map(to_u16));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let normal = Normal::new(0.0, noise_sigma)
        .map_err(|e| Error::invalid(format!("noise sigma: {e}")))?;
    Ok(values.map(|v| to_u16(v + normal.sample(&mut rng))))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_spec(rows: usize, cols: usize) -> PhantomSpec {
        PhantomSpec {
            grid: make_grid_layout(rows, cols, true).unwrap(),
            block_extents: [40, 36, 30],
            true_overlap_x: 4,
            true_overlap_y: 3,
            nuclei_per_block: 3,
            radius_range: (2.0, 3.0),
            ..PhantomSpec::default()
        }
    }

    #[test]
    fn empty_phantom_is_background() {
        let spec = PhantomSpec {
            nuclei_per_block: 0,
            ..grid_spec(2, 2)
        };
        let p = generate_phantom(&spec, 1).unwrap();
        for t in &p.tiles {
            assert!(t.nuclear.voxels.as_slice().iter().all(|&v| v == 500));
            assert!(t.activity.voxels.as_slice().iter().all(|&v| v == 200));
        }
    }

    #[test]
    fn overlap_strips_identical_without_noise() {
        let spec = PhantomSpec {
            block_extents: [100, 100, 20],
            true_overlap_x: 10,
            true_overlap_y: 7,
            nuclei_per_block: 4,
            radius_range: (3.0, 4.0),
            grid: make_grid_layout(2, 2, true).unwrap(),
            ..PhantomSpec::default()
        };
        let p = generate_phantom(&spec, 7).unwrap();
        let a = &p.tile(GridPos::new(0, 0)).unwrap().nuclear.voxels;
        let b = &p.tile(GridPos::new(0, 1)).unwrap().nuclear.voxels;
        let right = a.subvolume([90, 0, 0], [10, 100, 20]).unwrap();
        let left = b.subvolume([0, 0, 0], [10, 100, 20]).unwrap();
        assert_eq!(right, left);
        let c = &p.tile(GridPos::new(1, 0)).unwrap().nuclear.voxels;
        let bottom = a.subvolume([0, 93, 0], [100, 7, 20]).unwrap();
        let top = c.subvolume([0, 0, 0], [100, 7, 20]).unwrap();
        assert_eq!(bottom, top);
        // the strips must carry signal for the check to mean anything
        assert!(p.truth.nuclei.len() == 16);
    }

    #[test]
    fn deterministic_given_seed() {
        let spec = PhantomSpec {
            noise_sigma: 30.0,
            ..grid_spec(2, 3)
        };
        let a = generate_phantom(&spec, 99).unwrap();
        let b = generate_phantom(&spec, 99).unwrap();
        assert_eq!(a, b);
        let c = generate_phantom(&spec, 100).unwrap();
        assert_ne!(a.tiles[0].nuclear, c.tiles[0].nuclear);
    }

    #[test]
    fn noise_is_independent_per_tile() {
        let spec = PhantomSpec {
            nuclei_per_block: 0,
            noise_sigma: 20.0,
            ..grid_spec(1, 2)
        };
        let p = generate_phantom(&spec, 3).unwrap();
        let a = p.tiles[0].nuclear.voxels.subvolume([36, 0, 0], [4, 36, 30]).unwrap();
        let b = p.tiles[1].nuclear.voxels.subvolume([0, 0, 0], [4, 36, 30]).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn overlap_beyond_ten_percent_rejected() {
        let spec = PhantomSpec {
            true_overlap_x: 5,
            ..grid_spec(1, 2)
        };
        assert!(matches!(
            generate_phantom(&spec, 0),
            Err(Error::InvalidArgument(_))
        ));
        let spec = PhantomSpec {
            true_overlap_y: 0,
            ..grid_spec(1, 2)
        };
        assert!(generate_phantom(&spec, 0).is_err());
    }

    #[test]
    fn nuclei_separated_and_inside_home_tile() {
        let spec = grid_spec(3, 3);
        let p = generate_phantom(&spec, 11).unwrap();
        assert_eq!(p.truth.nuclei.len(), 27);
        for n in &p.truth.nuclei {
            let local = p.truth.nuclei_in_block(n.home);
            assert!(local.iter().any(|(m, _)| m.id == n.id));
            for m in &p.truth.nuclei {
                if m.id != n.id {
                    let d: f64 = (0..3)
                        .map(|a| (m.center[a] - n.center[a]).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    assert!(d >= m.radius + n.radius);
                }
            }
        }
    }

    #[test]
    fn activity_signal_only_in_active_neurons() {
        let spec = PhantomSpec {
            active_fraction: 0.5,
            neuron_fraction: 0.6,
            ..grid_spec(1, 1)
        };
        let p = generate_phantom(&spec, 5).unwrap();
        let tile = &p.tiles[0];
        for (n, local) in p.truth.nuclei_in_block(tile.pos) {
            let c = local.map(|v| v.round() as usize);
            let v = tile.activity.voxels.get(c[0], c[1], c[2]);
            if n.active {
                assert!(v > 1500, "active nucleus {} reads {v}", n.id);
                assert_eq!(n.class, CellClass::Neuron);
            } else {
                assert!(v < 400, "inactive nucleus {} reads {v}", n.id);
            }
        }
    }
}
