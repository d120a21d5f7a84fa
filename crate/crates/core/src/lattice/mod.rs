//! Periodic lattice geometry and the discrete calculus on it.
//!
//! Sites of a torus of side `N` in dimension `d` are indexed linearly with
//! coordinate 0 varying fastest: `x = c_0 + c_1 N + ... + c_{d-1} N^{d-1}`.
//! The edge `[x, x + e_i]` is stored at slot `(x, i)`; vector fields keep
//! one contiguous block of `N^d` values per component.

pub(crate) mod field;
pub mod io;
mod mask;

pub use field::{divergence_star, gradient, ScalarField, VectorField};
pub use mask::{annulus_sum, AveragingMask};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported dimension.
pub const MAX_DIM: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TorusLattice {
    dim: usize,
    side: usize,
}

impl TorusLattice {
    pub fn new(dim: usize, side: usize) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(Error::InvalidArgument(format!(
                "dimension must lie in 1..={MAX_DIM}, got {dim}"
            )));
        }
        if side < 2 {
            return Err(Error::InvalidArgument(format!(
                "side length must be at least 2, got {side}"
            )));
        }
        Ok(Self { dim, side })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn side(&self) -> usize {
        self.side
    }

    #[inline]
    pub fn num_sites(&self) -> usize {
        self.side.pow(self.dim as u32)
    }

    /// Number of edge slots, `d N^d`.
    #[inline]
    pub fn num_edges(&self) -> usize {
        self.dim * self.num_sites()
    }

    #[inline]
    pub fn stride(&self, axis: usize) -> usize {
        self.side.pow(axis as u32)
    }

    pub fn coords(&self, idx: usize) -> [usize; MAX_DIM] {
        let mut out = [0; MAX_DIM];
        let mut rest = idx;
        for c in out.iter_mut().take(self.dim) {
            *c = rest % self.side;
            rest /= self.side;
        }
        out
    }

    /// Linear index of a coordinate tuple; coordinates are reduced mod `N`.
    pub fn index(&self, coords: &[i64]) -> usize {
        let n = self.side as i64;
        coords
            .iter()
            .take(self.dim)
            .rev()
            .fold(0usize, |acc, &c| acc * self.side + c.rem_euclid(n) as usize)
    }

    /// Site reached from `idx` by moving `delta` steps along `axis`.
    pub fn shift(&self, idx: usize, axis: usize, delta: i64) -> usize {
        let s = self.stride(axis);
        let n = self.side as i64;
        let c = ((idx / s) % self.side) as i64;
        let moved = (c + delta).rem_euclid(n);
        (idx as i64 + (moved - c) * s as i64) as usize
    }

    #[inline]
    pub fn forward(&self, idx: usize, axis: usize) -> usize {
        self.shift(idx, axis, 1)
    }

    #[inline]
    pub fn backward(&self, idx: usize, axis: usize) -> usize {
        self.shift(idx, axis, -1)
    }

    /// The `2d` nearest neighbors of `idx` (with repetition when `N = 2`).
    pub fn neighbors(&self, idx: usize) -> Vec<usize> {
        (0..self.dim)
            .flat_map(|axis| [self.forward(idx, axis), self.backward(idx, axis)])
            .collect()
    }

    /// Shortest periodic representative of a coordinate, in `(-N/2, N/2]`.
    #[inline]
    pub fn wrap_coordinate(&self, c: usize) -> i64 {
        let n = self.side as i64;
        let c = c as i64;
        if 2 * c > n {
            c - n
        } else {
            c
        }
    }

    /// Displacement of `idx` from the origin on the shortest periodic representative.
    pub fn displacement(&self, idx: usize) -> [i64; MAX_DIM] {
        let c = self.coords(idx);
        let mut out = [0; MAX_DIM];
        for k in 0..self.dim {
            out[k] = self.wrap_coordinate(c[k]);
        }
        out
    }

    /// Squared Euclidean distance between two sites on the torus.
    pub fn dist2(&self, a: usize, b: usize) -> i64 {
        let ca = self.coords(a);
        let cb = self.coords(b);
        let n = self.side;
        (0..self.dim)
            .map(|k| {
                let diff = (ca[k] + n - cb[k]) % n;
                let w = self.wrap_coordinate(diff);
                w * w
            })
            .sum()
    }

    /// Writes `u(x + e_axis) - u(x)` into `out`.
    pub(crate) fn forward_diff_axis(&self, u: &[f64], axis: usize, out: &mut [f64]) {
        let s = self.stride(axis);
        let block = self.side * s;
        let split = block - s;
        for (ub, ob) in u.chunks_exact(block).zip(out.chunks_exact_mut(block)) {
            let (head, tail) = ob.split_at_mut(split);
            for ((o, &next), &cur) in head.iter_mut().zip(&ub[s..]).zip(&ub[..split]) {
                *o = next - cur;
            }
            for ((o, &next), &cur) in tail.iter_mut().zip(&ub[..s]).zip(&ub[split..]) {
                *o = next - cur;
            }
        }
    }

    /// Adds `scale * (g(x) - g(x - e_axis))` to `out`.
    pub(crate) fn add_backward_diff_axis(
        &self,
        g: &[f64],
        axis: usize,
        scale: f64,
        out: &mut [f64],
    ) {
        let s = self.stride(axis);
        let block = self.side * s;
        let split = block - s;
        for (gb, ob) in g.chunks_exact(block).zip(out.chunks_exact_mut(block)) {
            let (head, tail) = ob.split_at_mut(s);
            for ((o, &cur), &prev) in head.iter_mut().zip(&gb[..s]).zip(&gb[split..]) {
                *o += scale * (cur - prev);
            }
            for ((o, &cur), &prev) in tail.iter_mut().zip(&gb[s..]).zip(&gb[..split]) {
                *o += scale * (cur - prev);
            }
        }
    }
}
