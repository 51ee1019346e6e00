//! Periodic uniform lattices over flat tori in one and two dimensions.
//!
//! Every field in this crate lives on a [`Grid`]: a row-major lattice with the
//! last axis fastest, periodic in every direction. Grids are tiny value types
//! and are compared for identity whenever two fields meet in an operation.

use crate::error::{Error, Result};

/// A uniform periodic lattice over the torus `T^n`, `n` in {1, 2}.
///
/// Internally the storage is always two-dimensional; a 1-d grid carries a
/// phantom second axis of extent one so that indexing is uniform.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    dim: usize,
    shape: [usize; 2],
    lengths: [f64; 2],
}

impl Grid {
    /// Builds a grid, validating that every real extent is even and at least 8
    /// and that every period is positive.
    pub fn new(dim: usize, shape: &[usize], lengths: &[f64]) -> Result<Self> {
        if dim == 0 || dim > 2 || shape.len() != dim || lengths.len() != dim {
            return Err(Error::BadGridDim(dim));
        }
        for &n in shape {
            if n < 8 || n % 2 != 0 {
                return Err(Error::BadGridShape(n));
            }
        }
        for &l in lengths {
            if !(l > 0.0) || !l.is_finite() {
                return Err(Error::BadGridLength(l));
            }
        }
        let mut s = [1usize; 2];
        let mut ls = [1.0f64; 2];
        s[..dim].copy_from_slice(shape);
        ls[..dim].copy_from_slice(lengths);
        Ok(Grid {
            dim,
            shape: s,
            lengths: ls,
        })
    }

    /// Unit-period square grid, the workhorse of the test suites.
    pub fn square(dim: usize, n: usize, length: f64) -> Result<Self> {
        match dim {
            1 => Grid::new(1, &[n], &[length]),
            _ => Grid::new(2, &[n, n], &[length, length]),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Real extents, one per axis.
    pub fn shape(&self) -> &[usize] {
        &self.shape[..self.dim]
    }

    /// Torus periods, one per axis.
    pub fn lengths(&self) -> &[f64] {
        &self.lengths[..self.dim]
    }

    /// Grid spacing `h_i = L_i / N_i`.
    pub fn spacing(&self, axis: usize) -> f64 {
        self.lengths[axis] / self.shape[axis] as f64
    }

    /// Total number of lattice points.
    pub fn len(&self) -> usize {
        self.shape[0] * self.shape[1]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Volume of one quadrature cell, `prod_i h_i`.
    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing(a)).product()
    }

    /// Row-major flat index of the lattice point `(i0, i1)`.
    pub fn index(&self, i0: usize, i1: usize) -> usize {
        i0 * self.shape[1] + i1
    }

    /// Cartesian coordinates of the flat index `p`.
    pub fn coords(&self, p: usize) -> [f64; 2] {
        let i0 = p / self.shape[1];
        let i1 = p % self.shape[1];
        [
            i0 as f64 * self.spacing_raw(0),
            i1 as f64 * self.spacing_raw(1),
        ]
    }

    fn spacing_raw(&self, axis: usize) -> f64 {
        self.lengths[axis] / self.shape[axis] as f64
    }

    /// Flat index of the point shifted by `offset` cells along `axis`,
    /// with periodic wraparound.
    pub fn shifted(&self, p: usize, axis: usize, offset: isize) -> usize {
        let n1 = self.shape[1];
        let (i0, i1) = (p / n1, p % n1);
        let wrap = |i: usize, n: usize, d: isize| -> usize {
            let m = n as isize;
            (((i as isize + d) % m + m) % m) as usize
        };
        match axis {
            0 => self.index(wrap(i0, self.shape[0], offset), i1),
            _ => self.index(i0, wrap(i1, n1, offset)),
        }
    }

    pub(crate) fn check_axis(&self, axis: usize) -> Result<()> {
        if axis >= self.dim {
            return Err(Error::AxisOutOfRange {
                axis,
                dim: self.dim,
            });
        }
        Ok(())
    }
}

/// Applies the fourth-order central difference along `axis` to one storage
/// plane, periodic wraparound: `(-f(x+2h) + 8 f(x+h) - 8 f(x-h) + f(x-2h)) / (12 h)`.
pub(crate) fn plane_derivative(grid: &Grid, plane: &[f64], axis: usize) -> Vec<f64> {
    let mut out = vec![0.0; plane.len()];
    plane_derivative_into(grid, plane, axis, &mut out);
    out
}

/// Same, writing into a caller-provided buffer.
pub(crate) fn plane_derivative_into(grid: &Grid, plane: &[f64], axis: usize, out: &mut [f64]) {
    let (n0, n1) = (grid.shape[0], grid.shape[1]);
    let inv12h = 1.0 / (12.0 * grid.spacing(axis));
    let extent = if axis == 0 { n0 } else { n1 };
    // Wrapped neighbour offsets, precomputed per line index.
    let idx = |i: usize, d: isize| -> usize {
        let m = extent as isize;
        (((i as isize + d) % m + m) % m) as usize
    };
    // Grouped as 8 (f(+h) - f(-h)) - (f(+2h) - f(-2h)) so constant fields
    // cancel exactly instead of up to rounding.
    if axis == 0 {
        for i0 in 0..n0 {
            let (p2, p1, m1, m2) = (idx(i0, 2), idx(i0, 1), idx(i0, -1), idx(i0, -2));
            for i1 in 0..n1 {
                out[i0 * n1 + i1] = (8.0 * (plane[p1 * n1 + i1] - plane[m1 * n1 + i1])
                    - (plane[p2 * n1 + i1] - plane[m2 * n1 + i1]))
                    * inv12h;
            }
        }
    } else {
        for i1 in 0..n1 {
            let (p2, p1, m1, m2) = (idx(i1, 2), idx(i1, 1), idx(i1, -1), idx(i1, -2));
            for i0 in 0..n0 {
                let row = i0 * n1;
                out[row + i1] = (8.0 * (plane[row + p1] - plane[row + m1])
                    - (plane[row + p2] - plane[row + m2]))
                    * inv12h;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacing_matches_definition() {
        let g = Grid::new(2, &[16, 16], &[std::f64::consts::TAU, std::f64::consts::TAU]).unwrap();
        assert!((g.spacing(0) - std::f64::consts::PI / 8.0).abs() < 1e-15);
        assert!((g.spacing(1) - std::f64::consts::PI / 8.0).abs() < 1e-15);

        let g1 = Grid::new(1, &[32], &[1.0]).unwrap();
        assert_eq!(g1.spacing(0), 0.03125);
        assert_eq!(g1.len(), 32);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(Grid::new(2, &[7, 16], &[1.0, 1.0]).is_err());
        assert!(Grid::new(2, &[6, 16], &[1.0, 1.0]).is_err());
        assert!(Grid::new(1, &[16], &[0.0]).is_err());
        assert!(Grid::new(1, &[16], &[-2.0]).is_err());
        assert!(Grid::new(3, &[8, 8, 8], &[1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn periodic_shift_wraps() {
        let g = Grid::new(2, &[8, 8], &[1.0, 1.0]).unwrap();
        let p = g.index(0, 0);
        assert_eq!(g.shifted(p, 0, -1), g.index(7, 0));
        assert_eq!(g.shifted(p, 1, -2), g.index(0, 6));
        assert_eq!(g.shifted(g.index(7, 7), 0, 1), g.index(0, 7));
    }
}
