//! Sampled maps `v(s, t)` on a rectangular grid.

use nalgebra::Vector4;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{diff2, diff4};

/// Values on a uniform `n_s x n_t` grid over `[s_min, s_max] x [t_min, t_max]`,
/// stored row-major in `s` then `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid {
    pub s_min: f64,
    pub s_max: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub n_s: usize,
    pub n_t: usize,
    pub values: Vec<Vector4<f64>>,
}

impl FieldGrid {
    pub fn new(
        s_range: (f64, f64),
        n_s: usize,
        n_t: usize,
        values: Vec<Vector4<f64>>,
    ) -> Result<Self> {
        Self::with_t_range(s_range, (0.0, 1.0), n_s, n_t, values)
    }

    pub fn with_t_range(
        s_range: (f64, f64),
        t_range: (f64, f64),
        n_s: usize,
        n_t: usize,
        values: Vec<Vector4<f64>>,
    ) -> Result<Self> {
        if n_s < 3 || n_t < 3 {
            return Err(Error::GridMismatch(format!(
                "need at least 3x3 nodes, got {n_s}x{n_t}"
            )));
        }
        if !(s_range.1 > s_range.0 && t_range.1 > t_range.0) {
            return Err(Error::GridMismatch("empty grid range".into()));
        }
        if values.len() != n_s * n_t {
            return Err(Error::GridMismatch(format!(
                "{} values for {n_s}x{n_t} nodes",
                values.len()
            )));
        }
        Ok(Self {
            s_min: s_range.0,
            s_max: s_range.1,
            t_min: t_range.0,
            t_max: t_range.1,
            n_s,
            n_t,
            values,
        })
    }

    /// Samples `f(s, t)` on the grid; rows are evaluated in parallel.
    pub fn from_fn<F>(s_range: (f64, f64), n_s: usize, n_t: usize, f: F) -> Result<Self>
    where
        F: Fn(f64, f64) -> Vector4<f64> + Sync,
    {
        Self::from_fn_t(s_range, (0.0, 1.0), n_s, n_t, f)
    }

    pub fn from_fn_t<F>(
        s_range: (f64, f64),
        t_range: (f64, f64),
        n_s: usize,
        n_t: usize,
        f: F,
    ) -> Result<Self>
    where
        F: Fn(f64, f64) -> Vector4<f64> + Sync,
    {
        let mut g = Self::with_t_range(
            s_range,
            t_range,
            n_s,
            n_t,
            vec![Vector4::zeros(); n_s * n_t],
        )?;
        let (hs, ht) = (g.h_s(), g.h_t());
        g.values
            .par_chunks_mut(n_t)
            .enumerate()
            .for_each(|(i, row)| {
                let s = s_range.0 + i as f64 * hs;
                for (j, v) in row.iter_mut().enumerate() {
                    *v = f(s, t_range.0 + j as f64 * ht);
                }
            });
        Ok(g)
    }

    pub fn h_s(&self) -> f64 {
        (self.s_max - self.s_min) / (self.n_s - 1) as f64
    }

    pub fn h_t(&self) -> f64 {
        (self.t_max - self.t_min) / (self.n_t - 1) as f64
    }

    pub fn s(&self, i: usize) -> f64 {
        if i + 1 == self.n_s {
            self.s_max
        } else {
            self.s_min + i as f64 * self.h_s()
        }
    }

    pub fn t(&self, j: usize) -> f64 {
        if j + 1 == self.n_t {
            self.t_max
        } else {
            self.t_min + j as f64 * self.h_t()
        }
    }

    pub fn at(&self, i: usize, j: usize) -> Vector4<f64> {
        self.values[i * self.n_t + j]
    }

    pub fn row(&self, i: usize) -> &[Vector4<f64>] {
        &self.values[i * self.n_t..(i + 1) * self.n_t]
    }

    pub fn same_shape(&self, other: &FieldGrid) -> bool {
        self.n_s == other.n_s
            && self.n_t == other.n_t
            && self.s_min == other.s_min
            && self.s_max == other.s_max
            && self.t_min == other.t_min
            && self.t_max == other.t_max
    }

    pub fn map(&self, f: impl Fn(f64, f64, &Vector4<f64>) -> Vector4<f64> + Sync) -> FieldGrid {
        let mut out = self.clone();
        let (n_t, hs, ht) = (self.n_t, self.h_s(), self.h_t());
        out.values
            .par_chunks_mut(n_t)
            .enumerate()
            .for_each(|(i, row)| {
                let s = self.s_min + i as f64 * hs;
                for (j, v) in row.iter_mut().enumerate() {
                    *v = f(s, self.t_min + j as f64 * ht, v);
                }
            });
        out
    }

    /// Largest absolute component over all nodes.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.amax()))
    }

    pub fn max_abs_diff(&self, other: &FieldGrid) -> Result<f64> {
        if !self.same_shape(other) {
            return Err(Error::GridMismatch("grids differ in shape".into()));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).amax())))
    }

    /// Second-order `d/ds`, one-sided at the first and last rows.
    pub fn ds(&self) -> Vec<Vector4<f64>> {
        let mut out = vec![Vector4::zeros(); self.values.len()];
        let h = self.h_s();
        for j in 0..self.n_t {
            let col: Vec<_> = (0..self.n_s).map(|i| self.at(i, j)).collect();
            for (i, d) in diff2(&col, h).into_iter().enumerate() {
                out[i * self.n_t + j] = d;
            }
        }
        out
    }

    /// Second-order `d/dt`, one-sided at `t_min` and `t_max`.
    pub fn dt(&self) -> Vec<Vector4<f64>> {
        let h = self.h_t();
        (0..self.n_s).flat_map(|i| diff2(self.row(i), h)).collect()
    }

    /// Fourth-order `d/dt` (needs `n_t >= 5`).
    pub fn dt4(&self) -> Vec<Vector4<f64>> {
        let h = self.h_t();
        (0..self.n_s).flat_map(|i| diff4(self.row(i), h)).collect()
    }

    /// Grid holding precomputed node values with the same layout.
    pub fn with_values(&self, values: Vec<Vector4<f64>>) -> Result<FieldGrid> {
        FieldGrid::with_t_range(
            (self.s_min, self.s_max),
            (self.t_min, self.t_max),
            self.n_s,
            self.n_t,
            values,
        )
    }
}
