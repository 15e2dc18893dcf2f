use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::fft::{fft_forward, fft_inverse};
use super::grid::Grid;
use crate::error::{Error, Result};

/// Tensor order of a field. Tensor components are stored row-major,
/// component `(i, j)` at `i * dim + j`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rank {
    Scalar,
    Vector,
    Tensor,
}

impl Rank {
    pub fn components(self, dim: usize) -> usize {
        match self {
            Rank::Scalar => 1,
            Rank::Vector => dim,
            Rank::Tensor => dim * dim,
        }
    }

    pub fn order(self) -> usize {
        match self {
            Rank::Scalar => 0,
            Rank::Vector => 1,
            Rank::Tensor => 2,
        }
    }
}

/// Real periodic field sampled on a [`Grid`], with its Fourier coefficients.
///
/// Both representations are filled at construction and the field is
/// immutable afterwards, so they never drift apart.
#[derive(Clone, Debug)]
pub struct SpectralField {
    grid: Grid,
    rank: Rank,
    values: Vec<f64>,
    coeffs: Vec<Complex64>,
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.into()))
    }
}

impl SpectralField {
    pub fn zeros(grid: Grid, rank: Rank) -> Self {
        let len = grid.len() * rank.components(grid.dim());
        Self {
            grid,
            rank,
            values: vec![0.0; len],
            coeffs: vec![Complex64::new(0.0, 0.0); len],
        }
    }

    /// Constant scalar field.
    pub fn constant(grid: Grid, c: f64) -> Self {
        let mut coeffs = vec![Complex64::new(0.0, 0.0); grid.len()];
        coeffs[0] = Complex64::new(c, 0.0);
        Self {
            grid,
            rank: Rank::Scalar,
            values: vec![c; grid.len()],
            coeffs,
        }
    }

    /// Constant identity tensor.
    pub fn identity(grid: Grid) -> Self {
        let d = grid.dim();
        Self::from_fn(grid, Rank::Tensor, |_, c| if c / d == c % d { 1.0 } else { 0.0 })
    }

    pub fn from_values(grid: Grid, rank: Rank, values: Vec<f64>) -> Result<Self> {
        let expected = grid.len() * rank.components(grid.dim());
        if values.len() != expected {
            return Err(Error::Mismatch(format!(
                "{} values for {rank:?} field on {} nodes",
                values.len(),
                grid.len()
            )));
        }
        check_finite(&values, "field values")?;
        Ok(Self::from_values_unchecked(grid, rank, values))
    }

    pub(crate) fn from_values_unchecked(grid: Grid, rank: Rank, values: Vec<f64>) -> Self {
        let len = grid.len();
        let mut coeffs: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        for chunk in coeffs.chunks_mut(len) {
            fft_forward(&grid, chunk);
        }
        Self {
            grid,
            rank,
            values,
            coeffs,
        }
    }

    /// Samples `f(x, component)` at every node.
    pub fn from_fn(grid: Grid, rank: Rank, f: impl Fn(&[f64; 3], usize) -> f64) -> Self {
        let len = grid.len();
        let comps = rank.components(grid.dim());
        let mut values = Vec::with_capacity(len * comps);
        for c in 0..comps {
            for idx in 0..len {
                values.push(f(&grid.node(idx), c));
            }
        }
        Self::from_values_unchecked(grid, rank, values)
    }

    /// Builds a field from Fourier coefficients. The coefficients must be
    /// Hermitian-symmetric per component; the physical values keep only the
    /// real part of the synthesis.
    pub fn from_coefficients(grid: Grid, rank: Rank, coeffs: Vec<Complex64>) -> Self {
        let len = grid.len();
        assert_eq!(coeffs.len(), len * rank.components(grid.dim()));
        let mut work = coeffs.clone();
        for chunk in work.chunks_mut(len) {
            fft_inverse(&grid, chunk);
        }
        let values = work.iter().map(|z| z.re).collect();
        Self {
            grid,
            rank,
            values,
            coeffs,
        }
    }

    /// Stacks scalar fields into a field of the given rank.
    pub fn stack(rank: Rank, parts: &[SpectralField]) -> Result<Self> {
        let grid = parts
            .first()
            .ok_or_else(|| Error::Mismatch("no components to stack".into()))?
            .grid;
        if parts.len() != rank.components(grid.dim()) {
            return Err(Error::Mismatch(format!(
                "{} components for a {rank:?} field",
                parts.len()
            )));
        }
        let mut values = Vec::with_capacity(grid.len() * parts.len());
        let mut coeffs = Vec::with_capacity(grid.len() * parts.len());
        for p in parts {
            if p.rank != Rank::Scalar || !p.grid.same_shape(&grid) {
                return Err(Error::Mismatch("stack expects scalar fields on one grid".into()));
            }
            values.extend_from_slice(&p.values);
            coeffs.extend_from_slice(&p.coeffs);
        }
        Ok(Self {
            grid,
            rank,
            values,
            coeffs,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn rank(&self) -> Rank {
        self.rank
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn components(&self) -> usize {
        self.rank.components(self.grid.dim())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn component(&self, c: usize) -> &[f64] {
        let len = self.grid.len();
        &self.values[c * len..(c + 1) * len]
    }

    pub fn coeff_component(&self, c: usize) -> &[Complex64] {
        let len = self.grid.len();
        &self.coeffs[c * len..(c + 1) * len]
    }

    pub fn component_field(&self, c: usize) -> SpectralField {
        let len = self.grid.len();
        Self {
            grid: self.grid,
            rank: Rank::Scalar,
            values: self.values[c * len..(c + 1) * len].to_vec(),
            coeffs: self.coeffs[c * len..(c + 1) * len].to_vec(),
        }
    }

    /// Mean value of component `c`.
    pub fn mean(&self, c: usize) -> f64 {
        self.coeffs[c * self.grid.len()].re
    }

    pub fn same_layout(&self, other: &SpectralField) -> bool {
        self.rank == other.rank && self.grid.same_shape(&other.grid)
    }

    fn assert_layout(&self, other: &SpectralField) {
        assert!(
            self.same_layout(other),
            "field layout mismatch: {:?} vs {:?}",
            self.rank,
            other.rank
        );
    }

    fn linear(&self, other: &SpectralField, a: f64, b: f64) -> SpectralField {
        self.assert_layout(other);
        SpectralField {
            grid: self.grid,
            rank: self.rank,
            values: self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect(),
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(x, y)| x * a + y * b).collect(),
        }
    }

    pub fn add(&self, other: &SpectralField) -> SpectralField {
        self.linear(other, 1.0, 1.0)
    }

    pub fn sub(&self, other: &SpectralField) -> SpectralField {
        self.linear(other, 1.0, -1.0)
    }

    /// `self + a * other`.
    pub fn axpy(&self, a: f64, other: &SpectralField) -> SpectralField {
        self.linear(other, 1.0, a)
    }

    pub fn scale(&self, a: f64) -> SpectralField {
        SpectralField {
            grid: self.grid,
            rank: self.rank,
            values: self.values.iter().map(|x| a * x).collect(),
            coeffs: self.coeffs.iter().map(|x| x * a).collect(),
        }
    }

    /// Adds the constant `c` to every component.
    pub fn shift(&self, c: f64) -> SpectralField {
        let len = self.grid.len();
        let mut coeffs = self.coeffs.clone();
        for comp in 0..self.components() {
            coeffs[comp * len] += c;
        }
        SpectralField {
            grid: self.grid,
            rank: self.rank,
            values: self.values.iter().map(|x| x + c).collect(),
            coeffs,
        }
    }

    /// Applies `f` to every physical value.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> SpectralField {
        let values = self.values.iter().map(|&v| f(v)).collect();
        Self::from_values_unchecked(self.grid, self.rank, values)
    }

    /// Pointwise (collocation) product. A scalar factor broadcasts over the
    /// components of the other field.
    pub fn mul(&self, other: &SpectralField) -> SpectralField {
        assert!(self.grid.same_shape(&other.grid), "grid mismatch");
        let len = self.grid.len();
        let (rank, values) = match (self.rank, other.rank) {
            (Rank::Scalar, r) => {
                let mut v = other.values.clone();
                for chunk in v.chunks_mut(len) {
                    for (x, s) in chunk.iter_mut().zip(&self.values) {
                        *x *= s;
                    }
                }
                (r, v)
            }
            (r, Rank::Scalar) => return other.mul(self).with_rank(r),
            (a, b) => {
                assert_eq!(a, b, "componentwise product needs equal ranks");
                (a, self.values.iter().zip(&other.values).map(|(x, y)| x * y).collect())
            }
        };
        Self::from_values_unchecked(self.grid, rank, values)
    }

    fn with_rank(mut self, rank: Rank) -> SpectralField {
        self.rank = rank;
        self
    }

    /// Truncation to the 2/3-rule band.
    pub fn project(&self) -> SpectralField {
        let len = self.grid.len();
        let mut coeffs = self.coeffs.clone();
        for chunk in coeffs.chunks_mut(len) {
            for (idx, c) in chunk.iter_mut().enumerate() {
                if !self.grid.in_dealias_band(idx) {
                    *c = Complex64::new(0.0, 0.0);
                }
            }
        }
        Self::from_coefficients(self.grid, self.rank, coeffs)
    }

    /// Whether all coefficients outside the dealiasing band are below `tol`
    /// (relative to the largest coefficient).
    pub fn is_band_limited(&self, tol: f64) -> bool {
        let len = self.grid.len();
        let scale = self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
        self.coeffs
            .iter()
            .enumerate()
            .all(|(i, c)| self.grid.in_dealias_band(i % len) || c.norm() <= tol * scale.max(1e-300))
    }

    /// Dealiased product: both inputs truncated to `|k_i| < N/3`, multiplied
    /// pointwise, and the result truncated again.
    pub fn product_dealiased(&self, other: &SpectralField) -> SpectralField {
        self.project().mul(&other.project()).project()
    }

    /// Pointwise Euclidean (Frobenius) magnitude.
    pub fn magnitude(&self) -> Vec<f64> {
        let len = self.grid.len();
        let comps = self.components();
        (0..len)
            .map(|i| {
                (0..comps)
                    .map(|c| self.values[c * len + i].powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect()
    }

    /// `L^p` norm of the pointwise magnitude by midpoint quadrature;
    /// `p = inf` takes the grid maximum.
    pub fn lp_norm(&self, p: f64) -> f64 {
        lp_of_magnitude(&self.grid, &self.magnitude(), p)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs_diff(&self, other: &SpectralField) -> f64 {
        self.assert_layout(other);
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Resamples onto another grid of the same dimension and period by
    /// copying the modes representable on both (Nyquist modes dropped).
    pub fn resample(&self, grid: Grid) -> Result<SpectralField> {
        if grid.dim() != self.grid.dim() || grid.length() != self.grid.length() {
            return Err(Error::Mismatch("resample needs equal dimension and period".into()));
        }
        let (src, dst) = (self.grid.len(), grid.len());
        let comps = self.components();
        let mut coeffs = vec![Complex64::new(0.0, 0.0); dst * comps];
        let lim = (self.grid.n().min(grid.n()) / 2) as i64;
        for idx in 0..src {
            let k = self.grid.wavenumbers(idx);
            if k[..grid.dim()].iter().any(|ki| ki.abs() >= lim) {
                continue;
            }
            let j = grid.mode_index(&k).expect("mode within both grids");
            for c in 0..comps {
                coeffs[c * dst + j] = self.coeffs[c * src + idx];
            }
        }
        Ok(Self::from_coefficients(grid, self.rank, coeffs))
    }

    /// Same samples reinterpreted on a grid with identical node count.
    pub fn on_grid(&self, grid: Grid) -> Result<SpectralField> {
        if grid.dim() != self.grid.dim() || grid.n() != self.grid.n() {
            return Err(Error::Mismatch("reinterpretation needs identical node layout".into()));
        }
        Ok(SpectralField {
            grid,
            rank: self.rank,
            values: self.values.clone(),
            coeffs: self.coeffs.clone(),
        })
    }

    fn dim_sq(&self) -> usize {
        self.dim() * self.dim()
    }

    fn require(&self, rank: Rank, what: &str) {
        assert_eq!(self.rank, rank, "{what} expects a {rank:?} field");
    }

    /// Tensor transpose.
    pub fn transpose(&self) -> SpectralField {
        self.require(Rank::Tensor, "transpose");
        let d = self.dim();
        let len = self.grid.len();
        let mut values = vec![0.0; len * self.dim_sq()];
        let mut coeffs = vec![Complex64::new(0.0, 0.0); len * self.dim_sq()];
        for i in 0..d {
            for j in 0..d {
                let (src, dst) = ((i * d + j) * len, (j * d + i) * len);
                values[dst..dst + len].copy_from_slice(&self.values[src..src + len]);
                coeffs[dst..dst + len].copy_from_slice(&self.coeffs[src..src + len]);
            }
        }
        SpectralField {
            grid: self.grid,
            rank: Rank::Tensor,
            values,
            coeffs,
        }
    }

    /// Tensor trace.
    pub fn trace(&self) -> SpectralField {
        self.require(Rank::Tensor, "trace");
        let d = self.dim();
        let len = self.grid.len();
        let mut values = vec![0.0; len];
        let mut coeffs = vec![Complex64::new(0.0, 0.0); len];
        for i in 0..d {
            let off = (i * d + i) * len;
            for k in 0..len {
                values[k] += self.values[off + k];
                coeffs[k] += self.coeffs[off + k];
            }
        }
        SpectralField {
            grid: self.grid,
            rank: Rank::Scalar,
            values,
            coeffs,
        }
    }

    /// Scalar field times the identity tensor.
    pub fn times_identity(&self) -> SpectralField {
        self.require(Rank::Scalar, "times_identity");
        let d = self.dim();
        let len = self.grid.len();
        let mut values = vec![0.0; len * d * d];
        let mut coeffs = vec![Complex64::new(0.0, 0.0); len * d * d];
        for i in 0..d {
            let off = (i * d + i) * len;
            values[off..off + len].copy_from_slice(&self.values);
            coeffs[off..off + len].copy_from_slice(&self.coeffs);
        }
        SpectralField {
            grid: self.grid,
            rank: Rank::Tensor,
            values,
            coeffs,
        }
    }

    /// Pointwise matrix product of two tensors, or tensor times vector.
    pub fn matmul(&self, other: &SpectralField) -> SpectralField {
        self.require(Rank::Tensor, "matmul");
        assert!(self.grid.same_shape(&other.grid));
        let d = self.dim();
        let len = self.grid.len();
        let a = &self.values;
        let b = &other.values;
        match other.rank {
            Rank::Tensor => {
                let mut values = vec![0.0; len * d * d];
                for i in 0..d {
                    for j in 0..d {
                        let out = &mut values[(i * d + j) * len..(i * d + j + 1) * len];
                        for k in 0..d {
                            let ao = (i * d + k) * len;
                            let bo = (k * d + j) * len;
                            for x in 0..len {
                                out[x] += a[ao + x] * b[bo + x];
                            }
                        }
                    }
                }
                Self::from_values_unchecked(self.grid, Rank::Tensor, values)
            }
            Rank::Vector => {
                let mut values = vec![0.0; len * d];
                for i in 0..d {
                    let out = &mut values[i * len..(i + 1) * len];
                    for k in 0..d {
                        let ao = (i * d + k) * len;
                        let bo = k * len;
                        for x in 0..len {
                            out[x] += a[ao + x] * b[bo + x];
                        }
                    }
                }
                Self::from_values_unchecked(self.grid, Rank::Vector, values)
            }
            Rank::Scalar => panic!("matmul with a scalar; use mul"),
        }
    }

    /// `A : B = Tr(AB) = sum_ij A_ij B_ji`.
    pub fn contract(&self, other: &SpectralField) -> SpectralField {
        self.require(Rank::Tensor, "contract");
        other.require(Rank::Tensor, "contract");
        let d = self.dim();
        let len = self.grid.len();
        let mut values = vec![0.0; len];
        for i in 0..d {
            for j in 0..d {
                let ao = (i * d + j) * len;
                let bo = (j * d + i) * len;
                for x in 0..len {
                    values[x] += self.values[ao + x] * other.values[bo + x];
                }
            }
        }
        Self::from_values_unchecked(self.grid, Rank::Scalar, values)
    }

    /// Applies a pointwise matrix function to a tensor field. The closure
    /// receives the row-major `dim x dim` entries and writes the result.
    pub fn map_matrix(&self, f: impl Fn(usize, &[f64], &mut [f64])) -> SpectralField {
        self.require(Rank::Tensor, "map_matrix");
        let d = self.dim();
        let len = self.grid.len();
        let mut values = vec![0.0; len * d * d];
        let mut m = [0.0; 9];
        let mut out = [0.0; 9];
        for x in 0..len {
            for c in 0..d * d {
                m[c] = self.values[c * len + x];
            }
            f(d, &m[..d * d], &mut out[..d * d]);
            for c in 0..d * d {
                values[c * len + x] = out[c];
            }
        }
        Self::from_values_unchecked(self.grid, Rank::Tensor, values)
    }

    /// Applies a pointwise matrix-to-scalar function to a tensor field.
    pub fn map_matrix_scalar(&self, f: impl Fn(usize, &[f64]) -> f64) -> SpectralField {
        self.require(Rank::Tensor, "map_matrix_scalar");
        let d = self.dim();
        let len = self.grid.len();
        let mut m = [0.0; 9];
        let values = (0..len)
            .map(|x| {
                for c in 0..d * d {
                    m[c] = self.values[c * len + x];
                }
                f(d, &m[..d * d])
            })
            .collect();
        Self::from_values_unchecked(self.grid, Rank::Scalar, values)
    }
}

/// Midpoint-rule `L^p` norm of nonnegative node values on `grid`.
pub(crate) fn lp_of_magnitude(grid: &Grid, mag: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        return mag.iter().copied().fold(0.0, f64::max);
    }
    let h = grid.cell_volume();
    if p == 2.0 {
        return (h * mag.iter().map(|v| v * v).sum::<f64>()).sqrt();
    }
    if p == 1.0 {
        return h * mag.iter().sum::<f64>();
    }
    let peak = mag.iter().copied().fold(0.0, f64::max);
    if peak == 0.0 {
        return 0.0;
    }
    peak * (h * mag.iter().map(|v| (v / peak).powf(p)).sum::<f64>()).powf(1.0 / p)
}

/// Largest imaginary part produced by synthesizing `coeffs`, relative to the
/// largest real part. Zero for Hermitian-symmetric data.
pub fn imaginary_residue(grid: &Grid, coeffs: &[Complex64]) -> f64 {
    let mut work = coeffs.to_vec();
    for chunk in work.chunks_mut(grid.len()) {
        fft_inverse(grid, chunk);
    }
    let re = work.iter().fold(0.0f64, |m, z| m.max(z.re.abs()));
    let im = work.iter().fold(0.0f64, |m, z| m.max(z.im.abs()));
    im / re.max(1e-300)
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;

    fn grid2() -> Grid {
        Grid::standard(2, 16).unwrap()
    }

    #[test]
    fn values_and_coefficients_agree() {
        let g = grid2();
        let f = SpectralField::from_fn(g, Rank::Scalar, |x, _| (2.0 * x[0]).sin() + 0.5 * x[1].cos());
        let back = SpectralField::from_coefficients(g, Rank::Scalar, f.coeffs().to_vec());
        assert!(f.max_abs_diff(&back) < 1e-14);
        assert!(imaginary_residue(&g, f.coeffs()) < 1e-12);
    }

    #[test]
    fn l2_norm_of_mode() {
        let g = grid2();
        let f = SpectralField::from_fn(g, Rank::Scalar, |x, _| (3.0 * x[1]).cos());
        // int cos^2 over (0, 2 pi)^2 = 2 pi^2
        assert!((f.lp_norm(2.0) - (2.0 * PI * PI).sqrt()).abs() < 1e-12);
        assert!((f.lp_norm(f64::INFINITY) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn dealiased_product_drops_high_modes() {
        let g = grid2();
        let cut = g.dealias_cutoff() as f64;
        let f = SpectralField::from_fn(g, Rank::Scalar, move |x, _| (cut * x[0]).cos());
        let p = f.product_dealiased(&f);
        // cos^2 = (1 + cos 2kx) / 2; the doubled mode leaves the band.
        assert!(p.shift(-0.5).max_abs() < 1e-14);
    }

    #[test]
    fn resample_preserves_band_limited_field() {
        let g = grid2();
        let fine = Grid::standard(2, 32).unwrap();
        let f = SpectralField::from_fn(g, Rank::Vector, |x, c| (x[0] + c as f64).sin() * (2.0 * x[1]).cos());
        let up = f.resample(fine).unwrap();
        let exact = SpectralField::from_fn(fine, Rank::Vector, |x, c| (x[0] + c as f64).sin() * (2.0 * x[1]).cos());
        assert!(up.max_abs_diff(&exact) < 1e-14);
        let down = up.resample(g).unwrap();
        assert!(down.max_abs_diff(&f) < 1e-14);
    }

    #[test]
    fn matrix_helpers() {
        let g = Grid::standard(2, 8).unwrap();
        let a = SpectralField::from_fn(g, Rank::Tensor, |x, c| x[0] + c as f64);
        let id = SpectralField::identity(g);
        assert!(a.matmul(&id).max_abs_diff(&a) < 1e-14);
        assert!(a.transpose().transpose().max_abs_diff(&a) < 1e-15);
        let tr = a.contract(&id);
        assert!(tr.max_abs_diff(&a.trace()) < 1e-13);
    }
}
