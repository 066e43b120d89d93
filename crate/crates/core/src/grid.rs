//! Uniform lattice on the 2-simplex and value tables interpolated over it.
//!
//! Grid points are `(i/n, j/n, (n-i-j)/n)` for lattice coordinates
//! `i + j <= n`, `n = m - 1`, stored in lexicographic `(i, j)` order. The
//! triangulation splits each lattice cell along the `i + j = const`
//! diagonal, which is the standard triangulation of the simplex lattice and
//! is invariant under relabeling of the three coordinates.

use std::sync::Arc;

use crate::error::{invalid, Result};
use crate::model::{BeliefState, FixationAction};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Interpolation {
    /// Value at the Euclidean-nearest grid point in the `(p1, p2)` chart.
    NearestNeighbor,
    /// Linear interpolation over the enclosing lattice triangle.
    #[default]
    Barycentric,
}

/// Three grid indices with convex weights.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stencil<T> {
    pub idx: [u32; 3],
    pub w: [T; 3],
}

impl<T: Scalar> Stencil<T> {
    #[inline]
    pub fn apply(&self, values: &[T]) -> T {
        self.w[0] * values[self.idx[0] as usize]
            + self.w[1] * values[self.idx[1] as usize]
            + self.w[2] * values[self.idx[2] as usize]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimplexGrid<T> {
    m: usize,
    points: Vec<[T; 3]>,
    coords: Vec<(u32, u32)>,
}

impl<T: Scalar> SimplexGrid<T> {
    pub fn new(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(invalid(format!("grid needs m >= 2 bins, got {m}")));
        }
        let n = m - 1;
        let nf = T::lit(n as f64);
        let mut points = Vec::with_capacity(m * (m + 1) / 2);
        let mut coords = Vec::with_capacity(points.capacity());
        for i in 0..=n {
            for j in 0..=(n - i) {
                let k = n - i - j;
                points.push([T::lit(i as f64) / nf, T::lit(j as f64) / nf, T::lit(k as f64) / nf]);
                coords.push((i as u32, j as u32));
            }
        }
        Ok(Self { m, points, coords })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, idx: usize) -> [T; 3] {
        self.points[idx]
    }

    pub fn points(&self) -> &[[T; 3]] {
        &self.points
    }

    pub fn belief(&self, idx: usize) -> BeliefState<T> {
        BeliefState::from_raw(self.points[idx].to_vec())
    }

    pub fn lattice(&self, idx: usize) -> (usize, usize) {
        let (i, j) = self.coords[idx];
        (i as usize, j as usize)
    }

    /// Flat index of lattice point `(i, j)`.
    pub fn index(&self, i: usize, j: usize) -> Option<usize> {
        let n = self.m - 1;
        if i + j > n {
            return None;
        }
        Some(i * (n + 1) - i * (i.saturating_sub(1)) / 2 + j)
    }

    /// Index of the grid point obtained by relabeling coordinates: entry
    /// `c` of the point moves to position `perm[c]`.
    pub fn permuted_index(&self, idx: usize, perm: [usize; 3]) -> usize {
        let n = self.m - 1;
        let (i, j) = self.lattice(idx);
        let src = [i, j, n - i - j];
        let mut dst = [0usize; 3];
        for c in 0..3 {
            dst[perm[c]] = src[c];
        }
        self.index(dst[0], dst[1]).expect("permutation preserves the lattice")
    }

    /// Nearest grid point in the `(p1, p2)` chart; ties go to the lowest
    /// flat index.
    pub fn nearest(&self, p: &[T]) -> usize {
        let n = self.m - 1;
        let nf = T::lit(n as f64);
        let x = (p[0] * nf).max(T::zero());
        let y = (p[1] * nf).max(T::zero());
        let fx = x.floor().to_i64().unwrap_or(0);
        let fy = y.floor().to_i64().unwrap_or(0);
        let mut best: Option<(T, usize)> = None;
        for i in (fx - 1)..=(fx + 2) {
            for j in (fy - 1)..=(fy + 2) {
                if i < 0 || j < 0 || (i + j) as usize > n {
                    continue;
                }
                let idx = self.index(i as usize, j as usize).unwrap();
                let q = self.points[idx];
                let d = (q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2);
                best = match best {
                    Some((bd, bi)) if bd < d || (bd == d && bi < idx) => Some((bd, bi)),
                    _ => Some((d, idx)),
                };
            }
        }
        best.map(|(_, i)| i).unwrap_or(0)
    }

    /// Enclosing triangle and barycentric weights of `p`.
    pub fn stencil(&self, p: &[T]) -> Stencil<T> {
        let n = self.m - 1;
        let nf = T::lit(n as f64);
        let x = (p[0] * nf).max(T::zero()).min(nf);
        let y = (p[1] * nf).max(T::zero()).min(nf);
        let mut i0 = x.floor().to_usize().unwrap_or(0).min(n - 1);
        let mut j0 = y.floor().to_usize().unwrap_or(0).min(n - 1);
        if i0 + j0 > n - 1 {
            // on the hypotenuse: step back into the last row of cells
            if j0 > 0 {
                j0 -= 1;
            } else {
                i0 -= 1;
            }
        }
        let fx = x - T::lit(i0 as f64);
        let fy = y - T::lit(j0 as f64);
        let upper_valid = i0 + j0 + 2 <= n;
        let (corners, w) = if fx + fy <= T::one() || !upper_valid {
            let w0 = (T::one() - fx - fy).max(T::zero());
            let (wx, wy) = (fx.max(T::zero()), fy.max(T::zero()));
            let s = w0 + wx + wy;
            ([(i0, j0), (i0 + 1, j0), (i0, j0 + 1)], [w0 / s, wx / s, wy / s])
        } else {
            (
                [(i0 + 1, j0 + 1), (i0 + 1, j0), (i0, j0 + 1)],
                [fx + fy - T::one(), T::one() - fy, T::one() - fx],
            )
        };
        let idx = corners.map(|(i, j)| self.index(i, j).expect("stencil corner inside simplex") as u32);
        Stencil { idx, w }
    }
}

/// Enumerates the `m (m + 1) / 2` points of the simplex lattice.
pub fn enumerate_points<T: Scalar>(m: usize) -> Result<SimplexGrid<T>> {
    SimplexGrid::new(m)
}

/// Per-fixation value table over a simplex grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueFunction<T> {
    grid: Arc<SimplexGrid<T>>,
    values: Vec<Vec<T>>,
    interp: Interpolation,
}

impl<T: Scalar> ValueFunction<T> {
    pub fn new(grid: Arc<SimplexGrid<T>>, values: Vec<Vec<T>>, interp: Interpolation) -> Result<Self> {
        if values.iter().any(|v| v.len() != grid.len()) {
            return Err(invalid("value table length does not match grid size"));
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(invalid("value table contains non-finite entries"));
        }
        Ok(Self { grid, values, interp })
    }

    pub fn constant(grid: Arc<SimplexGrid<T>>, num_actions: usize, v: T, interp: Interpolation) -> Self {
        let values = vec![vec![v; grid.len()]; num_actions];
        Self { grid, values, interp }
    }

    pub fn grid(&self) -> &Arc<SimplexGrid<T>> {
        &self.grid
    }

    pub fn interp(&self) -> Interpolation {
        self.interp
    }

    pub fn with_interp(mut self, interp: Interpolation) -> Self {
        self.interp = interp;
        self
    }

    pub fn num_actions(&self) -> usize {
        self.values.len()
    }

    pub fn table(&self, a: FixationAction) -> &[T] {
        &self.values[a.0]
    }

    pub fn tables(&self) -> &[Vec<T>] {
        &self.values
    }

    pub fn at(&self, a: FixationAction, idx: usize) -> T {
        self.values[a.0][idx]
    }

    pub fn interpolate_raw(&self, a: FixationAction, p: &[T]) -> T {
        let table = &self.values[a.0];
        match self.interp {
            Interpolation::NearestNeighbor => table[self.grid.nearest(p)],
            Interpolation::Barycentric => self.grid.stencil(p).apply(table),
        }
    }
}

/// Value of fixation `a` at belief `p`, interpolated from the grid.
pub fn interpolate<T: Scalar>(vf: &ValueFunction<T>, a: FixationAction, p: &BeliefState<T>) -> T {
    vf.interpolate_raw(a, p.probs())
}
