use alloc::format;
use core::f64::consts::PI;
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform periodic grid on `(0, L)^dim` with `n` points per axis.
///
/// Linear indices are row-major: axis 0 varies slowest.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    n: usize,
    length: f64,
}

impl Grid {
    pub fn new(dim: usize, n: usize, length: f64) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dimension {dim} not in 1..=3")));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "{n} points per axis; need a power of two >= 8"
            )));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidGrid(format!("period {length}")));
        }
        Ok(Self { dim, n, length })
    }

    /// Grid on the standard torus of period `2 pi`.
    pub fn standard(dim: usize, n: usize) -> Result<Self> {
        Self::new(dim, n, 2.0 * PI)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Same sample layout on a torus of a different period.
    pub fn with_length(&self, length: f64) -> Result<Self> {
        Self::new(self.dim, self.n, length)
    }

    /// Total number of nodes, `n^dim`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    pub fn volume(&self) -> f64 {
        self.length.powi(self.dim as i32)
    }

    /// Largest retained integer wavenumber under the 2/3 rule (`|k| < n/3`).
    pub fn dealias_cutoff(&self) -> i64 {
        (self.n as i64 - 1) / 3
    }

    pub fn multi_index(&self, idx: usize) -> [usize; 3] {
        let mut out = [0usize; 3];
        let mut rest = idx;
        for axis in (0..self.dim).rev() {
            out[axis] = rest % self.n;
            rest /= self.n;
        }
        out
    }

    pub fn linear_index(&self, multi: &[usize]) -> usize {
        multi[..self.dim]
            .iter()
            .fold(0, |acc, &i| acc * self.n + (i % self.n))
    }

    /// Physical coordinates of node `idx`; unused axes are zero.
    pub fn node(&self, idx: usize) -> [f64; 3] {
        let m = self.multi_index(idx);
        let h = self.spacing();
        let mut x = [0.0; 3];
        for axis in 0..self.dim {
            x[axis] = m[axis] as f64 * h;
        }
        x
    }

    /// Signed integer wavenumber stored at position `i` of an axis.
    pub fn wavenumber_1d(&self, i: usize) -> i64 {
        let n = self.n as i64;
        let i = i as i64;
        if i < n / 2 {
            i
        } else {
            i - n
        }
    }

    pub fn wavenumbers(&self, idx: usize) -> [i64; 3] {
        let m = self.multi_index(idx);
        let mut k = [0i64; 3];
        for axis in 0..self.dim {
            k[axis] = self.wavenumber_1d(m[axis]);
        }
        k
    }

    /// Index of the mode with integer wavenumbers `k`, or `None` when it is
    /// not representable on this grid.
    pub fn mode_index(&self, k: &[i64]) -> Option<usize> {
        let n = self.n as i64;
        let mut idx = 0usize;
        for &ki in &k[..self.dim] {
            if ki < -n / 2 || ki >= n / 2 {
                return None;
            }
            idx = idx * self.n + ki.rem_euclid(n) as usize;
        }
        Some(idx)
    }

    pub fn frequency_scale(&self) -> f64 {
        2.0 * PI / self.length
    }

    /// Frequency vector `2 pi k / L` of mode `idx`.
    pub fn xi(&self, idx: usize) -> [f64; 3] {
        let k = self.wavenumbers(idx);
        let c = self.frequency_scale();
        [k[0] as f64 * c, k[1] as f64 * c, k[2] as f64 * c]
    }

    /// Frequency vector with Nyquist components zeroed, used for odd symbols
    /// so that real fields stay real.
    pub fn xi_odd(&self, idx: usize) -> [f64; 3] {
        let k = self.wavenumbers(idx);
        let c = self.frequency_scale();
        let nyq = -(self.n as i64) / 2;
        let mut out = [0.0; 3];
        for axis in 0..self.dim {
            if k[axis] != nyq {
                out[axis] = k[axis] as f64 * c;
            }
        }
        out
    }

    pub fn xi_norm(&self, idx: usize) -> f64 {
        let xi = self.xi(idx);
        (xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]).sqrt()
    }

    /// Whether mode `idx` survives 2/3-rule truncation.
    pub fn in_dealias_band(&self, idx: usize) -> bool {
        let k = self.wavenumbers(idx);
        let cut = self.dealias_cutoff();
        k[..self.dim].iter().all(|ki| ki.abs() <= cut)
    }

    /// Largest `|xi|` retained by the dealiasing band.
    pub fn dealias_xi_max(&self) -> f64 {
        self.dealias_cutoff() as f64 * self.frequency_scale() * (self.dim as f64).sqrt()
    }

    pub(crate) fn same_shape(&self, other: &Grid) -> bool {
        self.dim == other.dim && self.n == other.n && self.length == other.length
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_sizes() {
        assert!(Grid::standard(2, 12).is_err());
        assert!(Grid::standard(2, 4).is_err());
        assert!(Grid::standard(4, 16).is_err());
        assert!(Grid::new(2, 16, -1.0).is_err());
    }

    #[test]
    fn index_roundtrip() {
        let g = Grid::standard(3, 8).unwrap();
        for idx in 0..g.len() {
            assert_eq!(g.linear_index(&g.multi_index(idx)), idx);
        }
        let k = [3, -4, 1];
        let idx = g.mode_index(&k).unwrap();
        assert_eq!(g.wavenumbers(idx), k);
        assert!(g.mode_index(&[4, 0, 0]).is_none());
    }

    #[test]
    fn dealias_cutoff_values() {
        assert_eq!(Grid::standard(1, 8).unwrap().dealias_cutoff(), 2);
        assert_eq!(Grid::standard(1, 32).unwrap().dealias_cutoff(), 10);
        assert_eq!(Grid::standard(1, 64).unwrap().dealias_cutoff(), 21);
    }
}
