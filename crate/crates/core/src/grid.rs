//! Uniform grids over axis-aligned boxes.
//!
//! Grid points in dimension `d` are exactly the multiples of the step that
//! fall inside the declared bounds: `{ a : a = k * step_d, k integer } ∩
//! [lower_d, upper_d]`. A point's cell is the closed box of half-step radius
//! around it. Flat indices are mixed-radix with dimension 0 least
//! significant.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Relative slack used when deciding membership and cell overlap, as a
/// fraction of the step. Covers accumulated floating point error without
/// moving any boundary by a meaningful amount.
const REL_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct GridDim {
    lower: f64,
    upper: f64,
    step: f64,
    /// Integer multiple of `step` at the first grid point.
    first: i64,
    count: usize,
}

/// A uniform grid over an axis-aligned box, any number of dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformGrid {
    dims: Vec<GridDim>,
    strides: Vec<usize>,
    len: usize,
}

fn ceil_tol(x: f64) -> i64 {
    let r = x.round();
    if (x - r).abs() <= REL_TOL {
        r as i64
    } else {
        x.ceil() as i64
    }
}

fn floor_tol(x: f64) -> i64 {
    let r = x.round();
    if (x - r).abs() <= REL_TOL {
        r as i64
    } else {
        x.floor() as i64
    }
}

impl UniformGrid {
    /// Build a grid from per-dimension `(lower, upper)` bounds and steps.
    pub fn new(bounds: &[(f64, f64)], steps: &[f64]) -> Result<Self> {
        if bounds.len() != steps.len() {
            return Err(Error::DimensionMismatch {
                context: "grid bounds vs steps",
                expected: bounds.len(),
                got: steps.len(),
            });
        }
        if bounds.is_empty() {
            return Err(Error::InvalidGrid {
                dim: 0,
                reason: "grid needs at least one dimension".into(),
            });
        }
        let mut dims = Vec::with_capacity(bounds.len());
        for (d, (&(lower, upper), &step)) in bounds.iter().zip(steps).enumerate() {
            if !step.is_finite() || step <= 0.0 {
                return Err(Error::InvalidGrid {
                    dim: d,
                    reason: format!("step {step} must be finite and positive"),
                });
            }
            if !lower.is_finite() || !upper.is_finite() || lower > upper {
                return Err(Error::InvalidGrid {
                    dim: d,
                    reason: format!("bounds [{lower}, {upper}] must be finite with lower <= upper"),
                });
            }
            let first = ceil_tol(lower / step);
            let last = floor_tol(upper / step);
            if last < first {
                return Err(Error::InvalidGrid {
                    dim: d,
                    reason: format!("no multiple of {step} inside [{lower}, {upper}]"),
                });
            }
            let count = (last - first + 1) as usize;
            dims.push(GridDim {
                lower,
                upper,
                step,
                first,
                count,
            });
        }
        let mut strides = Vec::with_capacity(dims.len());
        let mut len = 1usize;
        for dim in &dims {
            strides.push(len);
            len = len.checked_mul(dim.count).ok_or(Error::GridTooLarge {
                count: usize::MAX,
                max: usize::MAX,
            })?;
        }
        Ok(Self { dims, strides, len })
    }

    /// 1-D grid `{0, 1, ..., n-1}` used for tabulated finite systems.
    pub fn enumerated(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGrid {
                dim: 0,
                reason: "enumerated grid needs at least one point".into(),
            });
        }
        Self::new(&[(0.0, (n - 1) as f64)], &[1.0])
    }

    pub fn num_dims(&self) -> usize {
        self.dims.len()
    }

    /// Total number of grid points.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim_count(&self, d: usize) -> usize {
        self.dims[d].count
    }

    pub fn step(&self, d: usize) -> f64 {
        self.dims[d].step
    }

    pub fn lower(&self, d: usize) -> f64 {
        self.dims[d].lower
    }

    pub fn upper(&self, d: usize) -> f64 {
        self.dims[d].upper
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    /// Coordinate of grid point `i` in dimension `d`.
    pub fn coord_value(&self, d: usize, i: usize) -> f64 {
        let dim = &self.dims[d];
        (dim.first + i as i64) as f64 * dim.step
    }

    /// Smallest and largest grid point per dimension.
    pub fn first_point(&self, d: usize) -> f64 {
        self.coord_value(d, 0)
    }

    pub fn last_point(&self, d: usize) -> f64 {
        self.coord_value(d, self.dims[d].count - 1)
    }

    /// Per-dimension indices of a flat index.
    pub fn coords_of(&self, index: usize) -> Vec<usize> {
        let mut out = vec![0usize; self.dims.len()];
        self.coords_into(index, &mut out);
        out
    }

    pub fn coords_into(&self, index: usize, out: &mut [usize]) {
        debug_assert!(index < self.len);
        let mut rest = index;
        for (d, dim) in self.dims.iter().enumerate() {
            out[d] = rest % dim.count;
            rest /= dim.count;
        }
    }

    pub fn index_from_coords(&self, coords: &[usize]) -> usize {
        debug_assert_eq!(coords.len(), self.dims.len());
        coords
            .iter()
            .zip(&self.strides)
            .map(|(&c, &s)| c * s)
            .sum()
    }

    /// Real-valued grid point for a flat index.
    pub fn point_of(&self, index: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dims.len()];
        self.point_into(index, &mut out);
        out
    }

    pub fn point_into(&self, index: usize, out: &mut [f64]) {
        let mut rest = index;
        for (d, dim) in self.dims.iter().enumerate() {
            let i = rest % dim.count;
            rest /= dim.count;
            out[d] = (dim.first + i as i64) as f64 * dim.step;
        }
    }

    /// Index of the nearest grid point, ties toward the lower index.
    ///
    /// Errors if the point is further than half a step from every grid point
    /// in some dimension, naming that dimension.
    pub fn index_of(&self, point: &[f64]) -> Result<usize> {
        if point.len() != self.dims.len() {
            return Err(Error::DimensionMismatch {
                context: "point vs grid",
                expected: self.dims.len(),
                got: point.len(),
            });
        }
        let mut index = 0usize;
        for (d, (&x, dim)) in point.iter().zip(&self.dims).enumerate() {
            let rel = x / dim.step - dim.first as f64;
            let oob = Error::OutOfBounds {
                dim: d,
                value: x,
                lo: self.first_point(d) - dim.step / 2.0,
                hi: self.last_point(d) + dim.step / 2.0,
            };
            if !rel.is_finite() {
                return Err(oob);
            }
            // Round half toward the lower index, clamping the extreme faces
            // into the grid before the distance check.
            let i = (rel - 0.5 - REL_TOL).ceil().max(0.0);
            if i >= dim.count as f64 && rel - (dim.count - 1) as f64 > 0.5 + REL_TOL {
                return Err(oob);
            }
            let i = (i as usize).min(dim.count - 1);
            if (rel - i as f64).abs() > 0.5 + REL_TOL {
                return Err(oob);
            }
            index += i * self.strides[d];
        }
        Ok(index)
    }

    /// Indices of the cells intersecting `[lo, hi]` in dimension `d`,
    /// touching included, clamped to the grid. `None` when the interval
    /// misses the grid entirely.
    pub fn cover_dim(&self, d: usize, lo: f64, hi: f64) -> Option<(usize, usize)> {
        let dim = &self.dims[d];
        let tol = REL_TOL;
        // Cell i spans [(first+i)*step - step/2, (first+i)*step + step/2].
        let i_lo = ceil_tol(lo / dim.step - dim.first as f64 - 0.5 - tol).max(0);
        let i_hi = floor_tol(hi / dim.step - dim.first as f64 + 0.5 + tol).min(dim.count as i64 - 1);
        if i_lo > i_hi || i_hi < 0 || i_lo >= dim.count as i64 {
            return None;
        }
        Some((i_lo as usize, i_hi as usize))
    }

    /// Whether `[lo, hi]` lies inside the region covered by cells of
    /// dimension `d` (first cell's lower face to last cell's upper face).
    pub fn interval_within_cover(&self, d: usize, lo: f64, hi: f64) -> bool {
        let dim = &self.dims[d];
        let slack = dim.step * REL_TOL;
        lo >= self.first_point(d) - dim.step / 2.0 - slack
            && hi <= self.last_point(d) + dim.step / 2.0 + slack
    }

    /// Iterate grid points in index order as `(index, point)` pairs.
    pub fn iter_points(&self) -> impl Iterator<Item = (usize, Vec<f64>)> + '_ {
        (0..self.len).map(move |i| (i, self.point_of(i)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dim_points_are_step_multiples() {
        let g = UniformGrid::new(&[(-1.0, 1.0)], &[0.5]).unwrap();
        assert_eq!(g.len(), 5);
        let points: Vec<f64> = (0..5).map(|i| g.point_of(i)[0]).collect();
        assert_eq!(points, vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
    }

    #[test]
    fn unaligned_bounds_keep_only_interior_multiples() {
        let g = UniformGrid::new(&[(0.03, 1.0)], &[0.05]).unwrap();
        assert_eq!(g.first_point(0), 0.05);
        assert_eq!(g.last_point(0), 1.0);
        assert_eq!(g.len(), 20);
    }

    #[test]
    fn index_of_exact_point() {
        let g = UniformGrid::new(&[(-1.0, 1.0)], &[0.5]).unwrap();
        assert_eq!(g.index_of(&[0.0]).unwrap(), 2);
    }

    #[test]
    fn index_of_rounds_to_nearest() {
        let g = UniformGrid::new(&[(-1.0, 1.0)], &[0.5]).unwrap();
        assert_eq!(g.index_of(&[0.24]).unwrap(), 2);
        assert_eq!(g.index_of(&[0.26]).unwrap(), 3);
    }

    #[test]
    fn index_of_ties_toward_lower_index() {
        let g = UniformGrid::new(&[(-1.0, 1.0)], &[0.5]).unwrap();
        assert_eq!(g.index_of(&[0.25]).unwrap(), 2);
        assert_eq!(g.index_of(&[-0.25]).unwrap(), 1);
    }

    #[test]
    fn inspected_cell_in_fine_plane_grid() {
        // 201 x 201 grid on [-1,1]^2 with step 0.01; the cell inspected in
        // the circular-region analysis sits at (-0.62, -0.5).
        let g = UniformGrid::new(&[(-1.0, 1.0), (-1.0, 1.0)], &[0.01, 0.01]).unwrap();
        assert_eq!(g.len(), 201 * 201);
        let idx = g.index_of(&[-0.62, -0.5]).unwrap();
        assert_eq!(idx, 38 + 201 * 50);
        let p = g.point_of(idx);
        assert!((p[0] + 0.62).abs() < 1e-12);
        assert!((p[1] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn out_of_bounds_names_dimension() {
        let g = UniformGrid::new(&[(-1.0, 1.0), (-1.0, 1.0)], &[0.5, 0.5]).unwrap();
        match g.index_of(&[0.0, 1.6]) {
            Err(Error::OutOfBounds { dim, .. }) => assert_eq!(dim, 1),
            other => panic!("expected out-of-bounds, got {other:?}"),
        }
    }

    #[test]
    fn snap_distance_bounded_by_half_step() {
        let g = UniformGrid::new(&[(-1.0, 1.0)], &[0.5]).unwrap();
        for k in 0..100 {
            let x = -1.0 + 2.0 * (k as f64) / 99.0;
            let idx = g.index_of(&[x]).unwrap();
            assert!((g.point_of(idx)[0] - x).abs() <= 0.25 + 1e-9);
        }
    }

    #[test]
    fn index_point_maps_are_mutually_inverse() {
        let g = UniformGrid::new(&[(-1.0, 1.0), (0.0, 3.0)], &[0.25, 0.5]).unwrap();
        for i in 0..g.len() {
            assert_eq!(g.index_of(&g.point_of(i)).unwrap(), i);
            let coords = g.coords_of(i);
            assert_eq!(g.index_from_coords(&coords), i);
        }
    }

    #[test]
    fn cover_includes_touching_cells() {
        let g = UniformGrid::new(&[(-1.0, 1.0)], &[0.5]).unwrap();
        // [0.25, 0.25] touches the faces of cells 2 and 3.
        assert_eq!(g.cover_dim(0, 0.25, 0.25), Some((2, 3)));
        assert_eq!(g.cover_dim(0, 0.1, 0.1), Some((2, 2)));
        assert_eq!(g.cover_dim(0, -0.6, 0.1), Some((1, 2)));
        assert_eq!(g.cover_dim(0, 2.0, 3.0), None);
    }

    #[test]
    fn cover_clamps_to_grid() {
        let g = UniformGrid::new(&[(-1.0, 1.0)], &[0.5]).unwrap();
        assert_eq!(g.cover_dim(0, -5.0, 5.0), Some((0, 4)));
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(UniformGrid::new(&[(1.0, -1.0)], &[0.5]).is_err());
        assert!(UniformGrid::new(&[(-1.0, 1.0)], &[0.0]).is_err());
        assert!(UniformGrid::new(&[(-1.0, 1.0)], &[-0.5]).is_err());
        assert!(UniformGrid::new(&[(0.1, 0.2)], &[0.5]).is_err());
    }
}
