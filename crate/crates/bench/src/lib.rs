//! Shared fixtures for the criterion benches.

use neurovol::volume::{generate_phantom, make_grid_layout, Phantom, PhantomSpec};

/// A seeded `rows x cols` phantom of cubic `extent` blocks at 2% noise.
pub fn phantom(rows: usize, cols: usize, extent: usize) -> Phantom {
    let base = PhantomSpec::default();
    let r0 = (extent as f64 / 16.0).max(1.5);
    let spec = PhantomSpec {
        grid: make_grid_layout(rows, cols, true).expect("grid"),
        block_extents: [extent; 3],
        true_overlap_x: (extent / 10).max(1),
        true_overlap_y: (extent / 12).max(1),
        radius_range: (r0, 1.5 * r0),
        noise_sigma: 0.02 * base.dynamic_range(),
        ..base
    };
    generate_phantom(&spec, 11).expect("phantom")
}

#[cfg(test)]
mod tests {
    #[test]
    fn fixture_shape() {
        let p = super::phantom(1, 2, 32);
        assert_eq!(p.tiles.len(), 2);
        assert_eq!(p.tiles[0].nuclear.extents(), [32, 32, 32]);
    }
}
