use alloc::vec;
use alloc::vec::Vec;
use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use super::field::{Rank, SpectralField};
use super::grid::Grid;

/// Off-grid evaluation of a field by direct summation of its Fourier series.
///
/// Coefficients below `1e-17` of the largest one are skipped.
pub struct FourierEvaluator {
    grid: Grid,
    comps: usize,
    modes: Vec<[usize; 3]>,
    coeffs: Vec<Complex64>,
}

impl FourierEvaluator {
    pub fn new(field: &SpectralField) -> Self {
        let grid = *field.grid();
        let len = grid.len();
        let comps = field.components();
        let peak = field.coeffs().iter().map(|c| c.norm()).fold(0.0, f64::max);
        let cut = 1e-17 * peak;
        let half = grid.n() as i64 / 2;
        let mut modes = Vec::new();
        let mut coeffs = Vec::new();
        for idx in 0..len {
            let keep = (0..comps).any(|c| field.coeffs()[c * len + idx].norm() > cut);
            if !keep {
                continue;
            }
            let k = grid.wavenumbers(idx);
            let mut off = [0usize; 3];
            for axis in 0..grid.dim() {
                off[axis] = (k[axis] + half) as usize;
            }
            modes.push(off);
            for c in 0..comps {
                coeffs.push(field.coeffs()[c * len + idx]);
            }
        }
        Self {
            grid,
            comps,
            modes,
            coeffs,
        }
    }

    pub fn components(&self) -> usize {
        self.comps
    }

    /// Writes the field components at `x` into `out`.
    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        let n = self.grid.n();
        let half = n as i64 / 2;
        let scale = self.grid.frequency_scale();
        let mut table = [vec![Complex64::new(1.0, 0.0); n], vec![Complex64::new(1.0, 0.0); n], vec![Complex64::new(1.0, 0.0); n]];
        for axis in 0..self.grid.dim() {
            for (i, t) in table[axis].iter_mut().enumerate() {
                let a = (i as i64 - half) as f64 * scale * x[axis];
                *t = Complex64::new(a.cos(), a.sin());
            }
        }
        let mut acc = [0.0f64; 9];
        for (m, off) in self.modes.iter().enumerate() {
            let mut e = table[0][off[0]];
            for axis in 1..self.grid.dim() {
                e *= table[axis][off[axis]];
            }
            for c in 0..self.comps {
                let z = self.coeffs[m * self.comps + c];
                acc[c] += z.re * e.re - z.im * e.im;
            }
        }
        out[..self.comps].copy_from_slice(&acc[..self.comps]);
    }
}

impl SpectralField {
    /// Evaluates all components at an arbitrary point.
    pub fn evaluate_at(&self, x: &[f64]) -> Vec<f64> {
        let ev = FourierEvaluator::new(self);
        let mut out = vec![0.0; self.components()];
        ev.eval(x, &mut out);
        out
    }
}

/// `f o (id + displacement)` sampled on the nodes of `f`'s grid.
pub fn compose(f: &SpectralField, displacement: &SpectralField) -> SpectralField {
    let grid = *f.grid();
    assert_eq!(displacement.rank(), Rank::Vector);
    assert!(grid.same_shape(displacement.grid()));
    let ev = FourierEvaluator::new(f);
    let d = grid.dim();
    let len = grid.len();
    let comps = f.components();
    let mut values = vec![0.0; len * comps];
    let mut x = [0.0; 3];
    let mut out = [0.0; 9];
    for idx in 0..len {
        let y = grid.node(idx);
        for a in 0..d {
            x[a] = y[a] + displacement.values()[a * len + idx];
        }
        ev.eval(&x[..d], &mut out);
        for c in 0..comps {
            values[c * len + idx] = out[c];
        }
    }
    SpectralField::from_values_unchecked(grid, f.rank(), values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation_is_exact_for_band_limited_fields() {
        let g = Grid::standard(2, 16).unwrap();
        let f = SpectralField::from_fn(g, Rank::Vector, |x, c| {
            (2.0 * x[0] - x[1] + c as f64).sin() + 0.3 * (5.0 * x[1]).cos()
        });
        let ev = FourierEvaluator::new(&f);
        let mut out = [0.0; 2];
        for p in [[0.123, 4.56], [3.3, 0.01], [6.2, 6.2]] {
            ev.eval(&p, &mut out);
            for c in 0..2 {
                let exact = (2.0 * p[0] - p[1] + c as f64).sin() + 0.3 * (5.0 * p[1]).cos();
                assert!((out[c] - exact).abs() < 1e-13);
            }
        }
    }
}
