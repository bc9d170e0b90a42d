use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row/column position of a tile in the acquisition grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GridPos {
    pub row: usize,
    pub col: usize,
}

impl GridPos {
    pub const fn new(row: usize, col: usize) -> Self {
        GridPos { row, col }
    }
}

impl fmt::Display for GridPos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}_c{}", self.row, self.col)
    }
}

/// Mapping between acquisition index and grid cell.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridLayout {
    pub rows: usize,
    pub cols: usize,
    pub snake: bool,
    order: Vec<GridPos>,
}

/// Builds the acquisition order. Row 0 runs left to right; with `snake` each
/// following row reverses direction, otherwise the order is row-major.
pub fn make_grid_layout(rows: usize, cols: usize, snake: bool) -> Result<GridLayout> {
    if rows == 0 || cols == 0 {
        return Err(Error::invalid(format!(
            "grid needs at least one row and column, got {rows}x{cols}"
        )));
    }
    let mut order = Vec::with_capacity(rows * cols);
    for row in 0..rows {
        if snake && row % 2 == 1 {
            order.extend((0..cols).rev().map(|col| GridPos::new(row, col)));
        } else {
            order.extend((0..cols).map(|col| GridPos::new(row, col)));
        }
    }
    Ok(GridLayout {
        rows,
        cols,
        snake,
        order,
    })
}

impl GridLayout {
    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn order(&self) -> &[GridPos] {
        &self.order
    }

    pub fn position(&self, index: usize) -> Option<GridPos> {
        self.order.get(index).copied()
    }

    /// Inverse of [`GridLayout::position`].
    pub fn index_of(&self, pos: GridPos) -> Option<usize> {
        if pos.row >= self.rows || pos.col >= self.cols {
            return None;
        }
        let col_step = if self.snake && pos.row % 2 == 1 {
            self.cols - 1 - pos.col
        } else {
            pos.col
        };
        Some(pos.row * self.cols + col_step)
    }

    pub fn contains(&self, pos: GridPos) -> bool {
        pos.row < self.rows && pos.col < self.cols
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_cell() {
        let g = make_grid_layout(1, 1, true).unwrap();
        assert_eq!(g.order(), &[GridPos::new(0, 0)]);
    }

    #[test]
    fn five_by_five_snake() {
        let g = make_grid_layout(5, 5, true).unwrap();
        assert_eq!(g.position(5), Some(GridPos::new(1, 4)));
        assert_eq!(g.position(9), Some(GridPos::new(1, 0)));
    }

    #[test]
    fn two_by_three_snake() {
        let g = make_grid_layout(2, 3, true).unwrap();
        let expected: Vec<GridPos> = [(0, 0), (0, 1), (0, 2), (1, 2), (1, 1), (1, 0)]
            .iter()
            .map(|&(r, c)| GridPos::new(r, c))
            .collect();
        assert_eq!(g.order(), expected.as_slice());
    }

    #[test]
    fn row_major_without_snake() {
        let g = make_grid_layout(2, 2, false).unwrap();
        assert_eq!(g.position(2), Some(GridPos::new(1, 0)));
    }

    #[test]
    fn zero_dimensions_rejected() {
        assert!(make_grid_layout(0, 3, true).is_err());
        assert!(make_grid_layout(3, 0, false).is_err());
    }

    proptest! {
        #[test]
        fn order_is_a_bijection(rows in 1usize..12, cols in 1usize..12, snake: bool) {
            let g = make_grid_layout(rows, cols, snake).unwrap();
            prop_assert_eq!(g.len(), rows * cols);
            for (i, pos) in g.order().iter().enumerate() {
                prop_assert_eq!(g.index_of(*pos), Some(i));
            }
            let mut seen = g.order().to_vec();
            seen.sort();
            seen.dedup();
            prop_assert_eq!(seen.len(), rows * cols);
        }

        #[test]
        fn snake_steps_are_adjacent(rows in 1usize..12, cols in 1usize..12) {
            let g = make_grid_layout(rows, cols, true).unwrap();
            for w in g.order().windows(2) {
                let dr = w[0].row.abs_diff(w[1].row);
                let dc = w[0].col.abs_diff(w[1].col);
                prop_assert_eq!(dr.max(dc), 1);
            }
        }
    }
}
