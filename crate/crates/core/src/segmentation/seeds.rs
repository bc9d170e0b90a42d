use std::collections::VecDeque;

use crate::volume::Volume;

/// Calls `f` with the linear index of every in-bounds 26-neighbour of `(x, y, z)`.
#[inline]
pub(crate) fn for_each_neighbor(
    extents: [usize; 3],
    [x, y, z]: [usize; 3],
    mut f: impl FnMut(usize),
) {
    let [nx, ny, nz] = extents;
    let zs = z.saturating_sub(1)..=(z + 1).min(nz - 1);
    for zz in zs {
        for yy in y.saturating_sub(1)..=(y + 1).min(ny - 1) {
            for xx in x.saturating_sub(1)..=(x + 1).min(nx - 1) {
                if xx == x && yy == y && zz == z {
                    continue;
                }
                f(xx + nx * (yy + ny * zz));
            }
        }
    }
}

/// Regional maxima of `dog` above `threshold` under 26-connectivity.
///
/// A maximum is a connected set of equal values whose outer neighbours are
/// all strictly lower. Plateaus collapse to their lexicographically smallest
/// `(x, y, z)` coordinate. The result is sorted lexicographically.
pub fn detect_seeds(dog: &Volume<f32>, threshold: f32) -> Vec<[usize; 3]> {
    let ext = dog.extents();
    let data = dog.as_slice();
    let mut visited = vec![false; data.len()];
    let mut seeds = Vec::new();
    let mut queue = VecDeque::new();

    for i in 0..data.len() {
        let v = data[i];
        if !(v > threshold) || visited[i] {
            continue;
        }
        let mut higher = false;
        let mut equal = false;
        for_each_neighbor(ext, dog.coords(i), |j| {
            if data[j] > v {
                higher = true;
            } else if data[j] == v {
                equal = true;
            }
        });
        if higher {
            continue;
        }
        if !equal {
            seeds.push(dog.coords(i));
            continue;
        }

        // Plateau: flood the equal-valued component and check its rim.
        let mut is_max = true;
        let mut best = dog.coords(i);
        visited[i] = true;
        queue.push_back(i);
        while let Some(p) = queue.pop_front() {
            let c = dog.coords(p);
            if lex_key(c) < lex_key(best) {
                best = c;
            }
            for_each_neighbor(ext, c, |j| {
                if data[j] > v {
                    is_max = false;
                } else if data[j] == v && !visited[j] {
                    visited[j] = true;
                    queue.push_back(j);
                }
            });
        }
        if is_max {
            seeds.push(best);
        }
    }
    seeds.sort_by_key(|&c| lex_key(c));
    seeds
}

#[inline]
fn lex_key(c: [usize; 3]) -> (usize, usize, usize) {
    (c[0], c[1], c[2])
}
