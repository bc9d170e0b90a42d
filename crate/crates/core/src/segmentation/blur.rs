use crate::error::{Error, Result};
use crate::volume::{Volume, VolumeBlock};

/// Kernels are truncated at this many standard deviations.
pub const KERNEL_TRUNCATE: f64 = 4.0;

/// Normalized 1D Gaussian weights for offsets `-r..=r`, `r = ceil(4 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let radius = (KERNEL_TRUNCATE * sigma).ceil() as isize;
    let mut weights: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= sum);
    weights
}

/// Half-sample symmetric reflection (`d c b a | a b c d | d c b a`).
#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = i.rem_euclid(period) as usize;
    if m < n {
        m
    } else {
        2 * n - 1 - m
    }
}

/// Separable Gaussian blur with a physical sigma in micrometers.
///
/// Each axis uses `sigma / resolution` voxels, so anisotropic sampling blurs
/// the same physical distance along every axis.
pub fn gaussian_blur_3d(block: &VolumeBlock, sigma: f64) -> Result<Volume<f32>> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!("blur sigma must be >= 0, got {sigma}")));
    }
    let input = block.voxels.map(|v| v as f32);
    if sigma == 0.0 {
        return Ok(input);
    }
    let res = block.resolution.as_array();
    let sigmas = [sigma / res[0], sigma / res[1], sigma / res[2]];
    Ok(blur_voxels(input, sigmas))
}

/// Separable blur with per-axis sigmas given in voxels.
pub fn blur_voxels(mut vol: Volume<f32>, sigmas: [f64; 3]) -> Volume<f32> {
    let mut line = Vec::new();
    let mut out = Vec::new();
    for (axis, &sigma) in sigmas.iter().enumerate() {
        if sigma > 0.0 {
            let kernel = gaussian_kernel(sigma);
            convolve_axis(&mut vol, axis, &kernel, &mut line, &mut out);
        }
    }
    vol
}

fn convolve_axis(
    vol: &mut Volume<f32>,
    axis: usize,
    kernel: &[f64],
    line: &mut Vec<f64>,
    out: &mut Vec<f32>,
) {
    let [nx, ny, nz] = vol.extents();
    let n = [nx, ny, nz][axis];
    let stride = [1, nx, nx * ny][axis];
    let radius = (kernel.len() / 2) as isize;
    let data = vol.as_mut_slice();

    // Enumerate the start index of every line along `axis`.
    let (outer_a, outer_b, step_a, step_b) = match axis {
        0 => (ny, nz, nx, nx * ny),
        1 => (nx, nz, 1, nx * ny),
        _ => (nx, ny, 1, nx),
    };
    for b in 0..outer_b {
        for a in 0..outer_a {
            let start = a * step_a + b * step_b;
            line.clear();
            line.extend((0..n).map(|i| data[start + i * stride] as f64));
            out.clear();
            for i in 0..n as isize {
                let mut acc = 0.0;
                for (k, w) in kernel.iter().enumerate() {
                    acc += w * line[reflect(i + k as isize - radius, n)];
                }
                out.push(acc as f32);
            }
            for (i, v) in out.iter().enumerate() {
                data[start + i * stride] = *v;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{GridPos, Resolution};

    fn block(vox: Volume<u16>, res: Resolution) -> VolumeBlock {
        VolumeBlock::new(vox, "dapi", GridPos::new(0, 0), res).unwrap()
    }

    #[test]
    fn reflection_indices() {
        assert_eq!(reflect(-1, 4), 0);
        assert_eq!(reflect(-2, 4), 1);
        assert_eq!(reflect(4, 4), 3);
        assert_eq!(reflect(5, 4), 2);
        assert_eq!(reflect(9, 4), 1);
        assert_eq!(reflect(-9, 1), 0);
    }

    #[test]
    fn constant_volume_is_preserved() {
        let b = block(Volume::filled([9, 7, 5], 1234), Resolution::isotropic_unit());
        for sigma in [0.5, 1.0, 3.0, 10.0] {
            let out = gaussian_blur_3d(&b, sigma).unwrap();
            for v in out.as_slice() {
                assert!((v - 1234.0).abs() < 1e-2, "sigma {sigma}: {v}");
            }
        }
    }

    #[test]
    fn zero_sigma_is_float_cast() {
        let vox = Volume::from_fn([4, 4, 4], |x, y, z| (x * 7 + y * 3 + z) as u16);
        let b = block(vox.clone(), Resolution::isotropic_unit());
        assert_eq!(gaussian_blur_3d(&b, 0.0).unwrap(), vox.map(|v| v as f32));
    }

    #[test]
    fn negative_sigma_rejected() {
        let b = block(Volume::filled([2, 2, 2], 0), Resolution::isotropic_unit());
        assert!(matches!(
            gaussian_blur_3d(&b, -1.0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn impulse_center_is_product_of_center_weights() {
        // Closed-form normalized center weight: 1 / sum_{i=-r}^{r} exp(-i^2 / 2 s^2)
        fn center_weight(s: f64) -> f64 {
            let r = (4.0 * s).ceil() as i64;
            1.0 / (-r..=r)
                .map(|i| (-(i * i) as f64 / (2.0 * s * s)).exp())
                .sum::<f64>()
        }
        let res = Resolution::new(0.5, 0.5, 2.0).unwrap();
        let sigma = 1.5;
        let mut vox = Volume::filled([41, 41, 21], 0u16);
        vox.set(20, 20, 10, 10_000);
        let out = gaussian_blur_3d(&block(vox, res), sigma).unwrap();
        let expected = 10_000.0
            * center_weight(sigma / 0.5)
            * center_weight(sigma / 0.5)
            * center_weight(sigma / 2.0);
        let got = out.get(20, 20, 10) as f64;
        assert!((got - expected).abs() / expected < 1e-5, "{got} vs {expected}");
    }

    #[test]
    fn blur_conserves_mass_away_from_edges() {
        let mut vox = Volume::filled([31, 31, 31], 0u16);
        vox.set(15, 15, 15, 1000);
        let out = gaussian_blur_3d(&block(vox, Resolution::isotropic_unit()), 2.0).unwrap();
        let total: f64 = out.as_slice().iter().map(|&v| v as f64).sum();
        assert!((total - 1000.0).abs() < 0.05);
    }
}
