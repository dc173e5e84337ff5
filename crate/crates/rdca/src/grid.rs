//! Periodic 2-D grids, five-point neighborhoods, and the discrete Laplacian.
//!
//! Everything downstream (the solver, the learned update rule, the sparse
//! regression library) shares this spatial substrate. Grids are row-major
//! flat `f64` arrays; index `(i, j)` maps to `i * n_cols + j`. All edges wrap.

use crate::error::{Error, Result};

/// Boundary handling. Only periodic wrapping is implemented; the enum exists
/// so configs can state the choice explicitly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum Boundary {
    #[default]
    Periodic,
}

/// One scalar quantity (a `u` or `v` concentration) on an `n_rows x n_cols`
/// periodic grid, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Field2D {
    n_rows: usize,
    n_cols: usize,
    values: Vec<f64>,
}

impl Field2D {
    /// Constant field.
    pub fn constant(n_rows: usize, n_cols: usize, value: f64) -> Self {
        Field2D { n_rows, n_cols, values: vec![value; n_rows * n_cols] }
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self::constant(n_rows, n_cols, 0.0)
    }

    /// Wrap an existing flat row-major buffer. Length must be `n_rows * n_cols`.
    pub fn from_values(n_rows: usize, n_cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_rows * n_cols {
            return Err(Error::domain(format!(
                "field buffer length {} does not match {}x{}",
                values.len(),
                n_rows,
                n_cols
            )));
        }
        Ok(Field2D { n_rows, n_cols, values })
    }

    /// Evaluate `f(i, j)` on every cell.
    pub fn from_fn(n_rows: usize, n_cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(n_rows * n_cols);
        for i in 0..n_rows {
            for j in 0..n_cols {
                values.push(f(i, j));
            }
        }
        Field2D { n_rows, n_cols, values }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.n_rows && j < self.n_cols);
        i * self.n_cols + j
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.idx(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        let k = self.idx(i, j);
        self.values[k] = value;
    }

    /// Value at `(i, j)` with periodic wrapping of out-of-range signed indices.
    #[inline]
    pub fn get_wrapped(&self, i: isize, j: isize) -> f64 {
        let i = wrap_index(i, self.n_rows).expect("n_rows > 0");
        let j = wrap_index(j, self.n_cols).expect("n_cols > 0");
        self.get(i, j)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Population standard deviation over all cells.
    pub fn std(&self) -> f64 {
        let mean = self.mean();
        let var =
            self.values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / self.len() as f64;
        var.sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Index of the first non-finite cell, if any.
    pub fn first_non_finite(&self) -> Option<(usize, usize)> {
        self.values
            .iter()
            .position(|v| !v.is_finite())
            .map(|k| (k / self.n_cols, k % self.n_cols))
    }
}

/// Paired `(u, v)` fields plus simulation time: the full system state.
#[derive(Debug, Clone, PartialEq)]
pub struct GridState {
    pub u: Field2D,
    pub v: Field2D,
    pub time: f64,
}

impl GridState {
    pub fn new(u: Field2D, v: Field2D, time: f64) -> Result<Self> {
        if u.n_rows() != v.n_rows() || u.n_cols() != v.n_cols() {
            return Err(Error::domain(format!(
                "u is {}x{} but v is {}x{}",
                u.n_rows(),
                u.n_cols(),
                v.n_rows(),
                v.n_cols()
            )));
        }
        if time < 0.0 || !time.is_finite() {
            return Err(Error::domain(format!("time must be finite and >= 0, got {time}")));
        }
        Ok(GridState { u, v, time })
    }

    pub fn n_rows(&self) -> usize {
        self.u.n_rows()
    }

    pub fn n_cols(&self) -> usize {
        self.u.n_cols()
    }

    pub fn n_cells(&self) -> usize {
        self.u.len()
    }
}

/// A cell's `(u, v)` pair and those of its four neighbors, in the fixed
/// order (up, bottom, left, right).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborhoodSample {
    pub cell: [f64; 2],
    pub up: [f64; 2],
    pub bottom: [f64; 2],
    pub left: [f64; 2],
    pub right: [f64; 2],
}

impl NeighborhoodSample {
    /// Neighbor values flattened as (up, bottom, left, right) x (u, v).
    pub fn neighbors_flat(&self) -> [f64; 8] {
        [
            self.up[0],
            self.up[1],
            self.bottom[0],
            self.bottom[1],
            self.left[0],
            self.left[1],
            self.right[0],
            self.right[1],
        ]
    }
}

/// Periodic index wrap: maps any signed `i` into `[0, n)`.
#[inline]
pub fn wrap_index(i: isize, n: usize) -> Result<usize> {
    if n == 0 {
        return Err(Error::domain("wrap_index: n must be positive"));
    }
    let n = n as isize;
    Ok((((i % n) + n) % n) as usize)
}

/// Five-point discrete Laplacian with periodic wrapping:
/// `(up + down + left + right - 4 * center) / dx^2` per cell.
pub fn laplacian(f: &Field2D, dx: f64) -> Result<Field2D> {
    if dx <= 0.0 || !dx.is_finite() {
        return Err(Error::domain(format!("laplacian: dx must be positive, got {dx}")));
    }
    let (nr, nc) = (f.n_rows(), f.n_cols());
    let inv_dx2 = 1.0 / (dx * dx);
    let src = f.values();
    let mut out = vec![0.0; src.len()];
    for i in 0..nr {
        let up = if i == 0 { nr - 1 } else { i - 1 };
        let down = if i + 1 == nr { 0 } else { i + 1 };
        for j in 0..nc {
            let left = if j == 0 { nc - 1 } else { j - 1 };
            let right = if j + 1 == nc { 0 } else { j + 1 };
            let center = src[i * nc + j];
            let sum = src[up * nc + j] + src[down * nc + j] + src[i * nc + left]
                + src[i * nc + right];
            out[i * nc + j] = (sum - 4.0 * center) * inv_dx2;
        }
    }
    Field2D::from_values(nr, nc, out)
}

/// Extract the five-point neighborhood of cell `(i, j)` with periodic wrapping.
pub fn neighborhood(s: &GridState, i: usize, j: usize) -> Result<NeighborhoodSample> {
    let (nr, nc) = (s.n_rows(), s.n_cols());
    if i >= nr || j >= nc {
        return Err(Error::domain(format!("neighborhood: ({i}, {j}) out of range for {nr}x{nc}")));
    }
    let up = if i == 0 { nr - 1 } else { i - 1 };
    let down = if i + 1 == nr { 0 } else { i + 1 };
    let left = if j == 0 { nc - 1 } else { j - 1 };
    let right = if j + 1 == nc { 0 } else { j + 1 };
    let pair = |r: usize, c: usize| [s.u.get(r, c), s.v.get(r, c)];
    Ok(NeighborhoodSample {
        cell: pair(i, j),
        up: pair(up, j),
        bottom: pair(down, j),
        left: pair(i, left),
        right: pair(i, right),
    })
}
