use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use super::grid::Grid;

/// In-place iterative radix-2 FFT for one power-of-two length.
pub struct Fft {
    n: usize,
    twiddles: Vec<Complex64>,
    conj_twiddles: Vec<Complex64>,
    bitrev: Vec<usize>,
}

impl Fft {
    pub fn new(n: usize) -> Self {
        assert!(n.is_power_of_two(), "FFT length must be a power of two");
        let twiddles: Vec<Complex64> = (0..n / 2)
            .map(|k| {
                let a = -2.0 * PI * k as f64 / n as f64;
                Complex64::new(a.cos(), a.sin())
            })
            .collect();
        let conj_twiddles = twiddles.iter().map(|w| w.conj()).collect();
        let bits = n.trailing_zeros();
        let bitrev = (0..n)
            .map(|i| if bits == 0 { 0 } else { i.reverse_bits() >> (usize::BITS - bits) })
            .collect();
        Self {
            n,
            twiddles,
            conj_twiddles,
            bitrev,
        }
    }

    /// Unnormalized transform; `inverse` flips the exponent sign.
    pub fn transform(&self, data: &mut [Complex64], inverse: bool) {
        let n = self.n;
        debug_assert_eq!(data.len(), n);
        for i in 0..n {
            let j = self.bitrev[i];
            if j > i {
                data.swap(i, j);
            }
        }
        let tw = if inverse { &self.conj_twiddles } else { &self.twiddles };
        let mut half = 1;
        while half < n {
            let step = n / (2 * half);
            for chunk in data.chunks_exact_mut(2 * half) {
                let (lo, hi) = chunk.split_at_mut(half);
                for k in 0..half {
                    let a = lo[k];
                    let b = hi[k] * tw[k * step];
                    lo[k] = a + b;
                    hi[k] = a - b;
                }
            }
            half <<= 1;
        }
    }
}

fn transform_nd(grid: &Grid, data: &mut [Complex64], inverse: bool) {
    let n = grid.n();
    let total = grid.len();
    debug_assert_eq!(data.len(), total);
    let fft = Fft::new(n);
    // contiguous axis first, in place
    for line in data.chunks_exact_mut(n) {
        fft.transform(line, inverse);
    }
    // strided axes: gather n lines at a time so the copies stay in cache
    let mut lines = vec![Complex64::new(0.0, 0.0); n * n];
    for axis in 0..grid.dim() - 1 {
        let stride = n.pow((grid.dim() - 1 - axis) as u32);
        let block = stride * n;
        for outer in (0..total).step_by(block) {
            for inner0 in (0..stride).step_by(n) {
                let width = n.min(stride - inner0);
                for i in 0..n {
                    let row = &data[outer + i * stride + inner0..outer + i * stride + inner0 + width];
                    for (w, v) in row.iter().enumerate() {
                        lines[w * n + i] = *v;
                    }
                }
                for w in 0..width {
                    fft.transform(&mut lines[w * n..(w + 1) * n], inverse);
                }
                for i in 0..n {
                    let row = &mut data[outer + i * stride + inner0..outer + i * stride + inner0 + width];
                    for (w, v) in row.iter_mut().enumerate() {
                        *v = lines[w * n + i];
                    }
                }
            }
        }
    }
}

/// Forward transform normalized so that `f(x) = sum_k c_k exp(i xi_k . x)`.
pub fn fft_forward(grid: &Grid, data: &mut [Complex64]) {
    transform_nd(grid, data, false);
    let scale = 1.0 / grid.len() as f64;
    for v in data.iter_mut() {
        *v *= scale;
    }
}

/// Inverse of [`fft_forward`]: evaluates the Fourier series on the nodes.
pub fn fft_inverse(grid: &Grid, data: &mut [Complex64]) {
    transform_nd(grid, data, true);
}

/// Direct O(N^2) evaluation of the normalized forward transform.
pub fn dft_naive(grid: &Grid, values: &[Complex64]) -> Vec<Complex64> {
    let total = grid.len();
    let n = grid.n() as f64;
    let mut out = vec![Complex64::new(0.0, 0.0); total];
    for (kidx, o) in out.iter_mut().enumerate() {
        let km = grid.multi_index(kidx);
        let mut acc = Complex64::new(0.0, 0.0);
        for (xidx, v) in values.iter().enumerate() {
            let xm = grid.multi_index(xidx);
            let mut phase = 0.0;
            for axis in 0..grid.dim() {
                phase += (km[axis] * xm[axis]) as f64 / n;
            }
            let a = -2.0 * PI * phase;
            acc += v * Complex64::new(a.cos(), a.sin());
        }
        *o = acc / total as f64;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha8Rng;
    use rand_core::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_data(len: usize, seed: u64) -> Vec<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len)
            .map(|_| Complex64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)))
            .collect()
    }

    #[test]
    fn matches_naive_dft() {
        for (dim, n) in [(1, 16), (2, 8), (3, 8), (1, 64)] {
            let g = Grid::standard(dim, n).unwrap();
            let x = random_data(g.len(), 7 + dim as u64);
            let mut fast = x.clone();
            fft_forward(&g, &mut fast);
            let slow = dft_naive(&g, &x);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).norm() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn roundtrip_is_identity() {
        let g = Grid::standard(2, 32).unwrap();
        let x = random_data(g.len(), 3);
        let mut y = x.clone();
        fft_forward(&g, &mut y);
        fft_inverse(&g, &mut y);
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn single_mode_lands_in_one_bin() {
        let g = Grid::standard(1, 16).unwrap();
        let x: Vec<Complex64> = (0..16)
            .map(|i| Complex64::new((3.0 * g.node(i)[0]).cos(), 0.0))
            .collect();
        let mut c = x;
        fft_forward(&g, &mut c);
        assert!((c[3].re - 0.5).abs() < 1e-14);
        assert!((c[13].re - 0.5).abs() < 1e-14);
        let rest: f64 = c
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != 3 && *i != 13)
            .map(|(_, v)| v.norm())
            .sum();
        assert!(rest < 1e-13);
    }
}
