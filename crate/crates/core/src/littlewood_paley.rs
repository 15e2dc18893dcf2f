//! Homogeneous Littlewood-Paley blocks, Besov norms and the time-integrated
//! norms of the solution space.
//!
//! The block `Delta_j` has symbol `phi(2^-j |xi|)` with
//! `phi(r) = chi(r / 2) - chi(r)`. `chi` equals 1 on `[0, inner]`, 0 on
//! `[outer, inf)` and is C-infinity in between. With the default radii
//! `(1/2, 1)` a mode with `|xi| = 2^j` sits entirely in block `j`. The mean
//! is not part of any block, so all Besov norms here ignore it.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::trapezoid;
use crate::random::{derive_seed, random_field, RandomFieldSpec};
use crate::spectral::{fft_inverse, lp_of_magnitude, Grid, Rank, SpectralField};

/// Radii of the smooth cutoff `chi`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    inner: f64,
    outer: f64,
}

impl Default for Partition {
    fn default() -> Self {
        Self {
            inner: 0.5,
            outer: 1.0,
        }
    }
}

fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let a = (-1.0 / t).exp();
        let b = (-1.0 / (1.0 - t)).exp();
        a / (a + b)
    }
}

impl Partition {
    /// Requires `0 < inner < outer <= 2 inner` so that only neighbouring
    /// blocks overlap.
    pub fn new(inner: f64, outer: f64) -> Result<Self> {
        if !(inner > 0.0 && outer > inner && outer <= 2.0 * inner) {
            return Err(Error::InvalidParameter(format!(
                "partition radii ({inner}, {outer}) need 0 < inner < outer <= 2 inner"
            )));
        }
        Ok(Self { inner, outer })
    }

    pub fn inner(&self) -> f64 {
        self.inner
    }

    pub fn outer(&self) -> f64 {
        self.outer
    }

    pub fn chi(&self, r: f64) -> f64 {
        1.0 - smooth_step((r - self.inner) / (self.outer - self.inner))
    }

    pub fn phi(&self, r: f64) -> f64 {
        self.chi(0.5 * r) - self.chi(r)
    }
}

/// Regularity `s` and integrability `p` (`p = inf` allowed).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BesovParams {
    pub s: f64,
    pub p: f64,
}

impl BesovParams {
    pub fn new(s: f64, p: f64) -> Result<Self> {
        if !(p >= 1.0) || !s.is_finite() {
            return Err(Error::InvalidParameter(format!("Besov index s = {s}, p = {p}")));
        }
        Ok(Self { s, p })
    }

    /// Critical regularity `n / p`.
    pub fn critical(dim: usize, p: f64) -> Result<Self> {
        Self::new(dim as f64 / p, p)
    }

    /// Velocity regularity `n / p - 1`.
    pub fn solution(dim: usize, p: f64) -> Result<Self> {
        Self::new(dim as f64 / p - 1.0, p)
    }

    pub fn with_s(&self, s: f64) -> Self {
        Self { s, p: self.p }
    }

    /// `n / p`.
    pub fn critical_index(&self, dim: usize) -> f64 {
        dim as f64 / self.p
    }

    /// Conjugate exponent `p'`.
    pub fn conjugate(&self) -> f64 {
        if self.p == 1.0 {
            f64::INFINITY
        } else if self.p.is_infinite() {
            1.0
        } else {
            self.p / (self.p - 1.0)
        }
    }
}

/// Per-block `L^p` norms of a field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DyadicSpectrum {
    pub j_min: i32,
    pub s: f64,
    pub p: f64,
    pub block_lp: Vec<f64>,
    pub total: f64,
}

impl DyadicSpectrum {
    pub fn j_max(&self) -> i32 {
        self.j_min + self.block_lp.len() as i32 - 1
    }

    /// `(j, ||Delta_j f||_{L^p}, 2^{js} ||Delta_j f||_{L^p})` rows.
    pub fn rows(&self) -> impl Iterator<Item = (i32, f64, f64)> + '_ {
        self.block_lp.iter().enumerate().map(move |(i, b)| {
            let j = self.j_min + i as i32;
            (j, *b, 2f64.powf(j as f64 * self.s) * b)
        })
    }
}

/// Block decomposition of one grid, with the block weights precomputed.
pub struct LittlewoodPaley {
    grid: Grid,
    partition: Partition,
    j_min: i32,
    radii: Vec<f64>,
    blocks: Vec<Vec<(usize, f64)>>,
    // |xi_odd|^2 per mode
    odd_sq: Vec<f64>,
}

impl LittlewoodPaley {
    pub fn new(grid: Grid, partition: Partition) -> Self {
        let len = grid.len();
        let radii: Vec<f64> = (0..len).map(|i| grid.xi_norm(i)).collect();
        let rmin = grid.frequency_scale();
        let rmax = radii.iter().copied().fold(0.0, f64::max);
        let lo = rmin.log2().floor() as i32 - 3;
        let hi = rmax.log2().ceil() as i32 + 3;
        let mut j_min = None;
        let mut blocks = Vec::new();
        for j in lo..=hi {
            let scale = 2f64.powi(-j);
            let entries: Vec<(usize, f64)> = radii
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != 0)
                .map(|(i, r)| (i, partition.phi(r * scale)))
                .filter(|(_, w)| *w > 0.0)
                .collect();
            if entries.is_empty() {
                if j_min.is_some() {
                    break;
                }
                continue;
            }
            j_min.get_or_insert(j);
            blocks.push(entries);
        }
        let odd_sq = (0..len)
            .map(|i| {
                let xo = grid.xi_odd(i);
                xo[0] * xo[0] + xo[1] * xo[1] + xo[2] * xo[2]
            })
            .collect();
        Self {
            grid,
            partition,
            j_min: j_min.expect("grid has nonzero modes"),
            radii,
            blocks,
            odd_sq,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn j_min(&self) -> i32 {
        self.j_min
    }

    pub fn j_max(&self) -> i32 {
        self.j_min + self.blocks.len() as i32 - 1
    }

    fn check(&self, f: &SpectralField) {
        assert!(
            f.grid().same_shape(&self.grid),
            "field grid differs from the decomposition grid"
        );
    }

    fn block_entries(&self, j: i32) -> &[(usize, f64)] {
        if j < self.j_min || j > self.j_max() {
            &[]
        } else {
            &self.blocks[(j - self.j_min) as usize]
        }
    }

    /// `Delta_j f`; zero outside the resolved band.
    pub fn block(&self, f: &SpectralField, j: i32) -> SpectralField {
        self.check(f);
        let len = self.grid.len();
        let comps = f.components();
        let mut coeffs = vec![Complex64::new(0.0, 0.0); len * comps];
        for &(idx, w) in self.block_entries(j) {
            for c in 0..comps {
                coeffs[c * len + idx] = f.coeffs()[c * len + idx] * w;
            }
        }
        SpectralField::from_coefficients(self.grid, f.rank(), coeffs)
    }

    /// `S_m f`: mean plus all blocks below `m`, symbol `chi(2^-m |xi|)`.
    pub fn low(&self, f: &SpectralField, m: i32) -> SpectralField {
        self.check(f);
        let len = self.grid.len();
        let comps = f.components();
        let scale = 2f64.powi(-m);
        let mut coeffs = f.coeffs().to_vec();
        for idx in 0..len {
            let w = self.partition.chi(self.radii[idx] * scale);
            for c in 0..comps {
                coeffs[c * len + idx] *= w;
            }
        }
        SpectralField::from_coefficients(self.grid, f.rank(), coeffs)
    }

    /// `(Id - S_m) f`.
    pub fn high(&self, f: &SpectralField, m: i32) -> SpectralField {
        f.sub(&self.low(f, m))
    }

    /// `||nabla^order Delta_j f||_{L^p}` for every block in the band.
    pub fn block_norms(&self, f: &SpectralField, p: f64, order: usize) -> Vec<f64> {
        self.check(f);
        let len = self.grid.len();
        let comps = f.components();
        let d = self.grid.dim();
        if p == 2.0 {
            return self.parseval_blocks(f.coeffs(), comps, order);
        }
        let dcomps = d.pow(order as u32);
        let mut work = vec![Complex64::new(0.0, 0.0); len];
        self.blocks
            .iter()
            .map(|entries| {
                let mut mag2 = vec![0.0; len];
                for c in 0..comps {
                    for di in 0..dcomps {
                        work.fill(Complex64::new(0.0, 0.0));
                        for &(idx, w) in entries {
                            let xo = self.grid.xi_odd(idx);
                            let mut z = f.coeffs()[c * len + idx] * w;
                            let mut rest = di;
                            for _ in 0..order {
                                z *= Complex64::new(0.0, xo[rest % d]);
                                rest /= d;
                            }
                            work[idx] = z;
                        }
                        fft_inverse(&self.grid, &mut work);
                        for (m, z) in mag2.iter_mut().zip(&work) {
                            *m += z.re * z.re;
                        }
                    }
                }
                let mag: Vec<f64> = mag2.iter().map(|v| v.sqrt()).collect();
                lp_of_magnitude(&self.grid, &mag, p)
            })
            .collect()
    }

    fn parseval_blocks(&self, coeffs: &[Complex64], comps: usize, order: usize) -> Vec<f64> {
        let len = self.grid.len();
        let vol = self.grid.volume();
        self.blocks
            .iter()
            .map(|entries| {
                let mut acc = 0.0;
                for &(idx, w) in entries {
                    let weight = w * w * self.odd_sq[idx].powi(order as i32);
                    for c in 0..comps {
                        acc += weight * coeffs[c * len + idx].norm_sqr();
                    }
                }
                (vol * acc).sqrt()
            })
            .collect()
    }

    /// `B^s_{2,1}` norm of `nabla^order f` straight from Fourier coefficients.
    pub(crate) fn besov_l2_coeffs(&self, coeffs: &[Complex64], comps: usize, order: usize, s: f64) -> f64 {
        self.parseval_blocks(coeffs, comps, order)
            .iter()
            .enumerate()
            .map(|(i, b)| 2f64.powf((self.j_min + i as i32) as f64 * s) * b)
            .sum()
    }

    pub fn spectrum(&self, f: &SpectralField, params: &BesovParams) -> DyadicSpectrum {
        self.spectrum_derivative(f, 0, params)
    }

    fn spectrum_derivative(&self, f: &SpectralField, order: usize, params: &BesovParams) -> DyadicSpectrum {
        let block_lp = self.block_norms(f, params.p, order);
        let total = block_lp
            .iter()
            .enumerate()
            .map(|(i, b)| 2f64.powf((self.j_min + i as i32) as f64 * params.s) * b)
            .sum();
        DyadicSpectrum {
            j_min: self.j_min,
            s: params.s,
            p: params.p,
            block_lp,
            total,
        }
    }

    /// `||f||_{B^s_{p,1}} = sum_j 2^{js} ||Delta_j f||_{L^p}`.
    pub fn besov(&self, f: &SpectralField, params: &BesovParams) -> f64 {
        self.spectrum(f, params).total
    }

    /// Besov norm of `nabla^order f` (Frobenius over all derivative indices).
    pub fn besov_derivative(&self, f: &SpectralField, order: usize, params: &BesovParams) -> f64 {
        self.spectrum_derivative(f, order, params).total
    }

    /// Per-block ratios `||nabla Delta_j f|| / (2^j ||Delta_j f||)`.
    pub fn bernstein_ratios(&self, f: &SpectralField, p: f64) -> Vec<f64> {
        let b0 = self.block_norms(f, p, 0);
        let b1 = self.block_norms(f, p, 1);
        b0.iter()
            .zip(&b1)
            .enumerate()
            .filter(|(_, (a, _))| **a > 1e-300)
            .map(|(i, (a, b))| b / (2f64.powi(self.j_min + i as i32) * a))
            .collect()
    }
}

/// `Delta_j f` with the default partition.
pub fn lp_block(f: &SpectralField, j: i32, partition: &Partition) -> SpectralField {
    LittlewoodPaley::new(*f.grid(), *partition).block(f, j)
}

/// `S_m f` with the given partition.
pub fn low_cutoff(f: &SpectralField, m: i32, partition: &Partition) -> SpectralField {
    LittlewoodPaley::new(*f.grid(), *partition).low(f, m)
}

pub fn dyadic_spectrum(f: &SpectralField, params: &BesovParams, partition: &Partition) -> DyadicSpectrum {
    LittlewoodPaley::new(*f.grid(), *partition).spectrum(f, params)
}

pub fn besov_norm(f: &SpectralField, params: &BesovParams, partition: &Partition) -> f64 {
    LittlewoodPaley::new(*f.grid(), *partition).besov(f, params)
}

/// Ratio of the norm of the same samples read on a torus of half the
/// period to the original norm. Frequencies double and `L^p` norms pick up
/// `2^{-n/p}`, so at `s = n/p` the ratio is 1.
pub fn critical_scaling_ratio(f: &SpectralField, params: &BesovParams, partition: &Partition) -> Result<f64> {
    let half = f.grid().with_length(0.5 * f.grid().length())?;
    let g = f.on_grid(half)?;
    let a = besov_norm(f, params, partition);
    if a == 0.0 {
        return Err(Error::InvalidParameter("scaling ratio of a zero-norm field".into()));
    }
    Ok(besov_norm(&g, params, partition) / a)
}

/// Estimate of the multiplier norm of `x -> f x` on `B^s_{p,1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiplierEstimate {
    pub value: f64,
    /// Index of the maximizing test field; 0 is the deterministic witness.
    pub witness: usize,
    pub samples: usize,
}

/// Maximizes `||psi f||` over unit-norm test fields `psi`: first the
/// normalized lowest Fourier mode, then `samples` seeded random fields whose
/// seeds depend only on `(seed, index)`. The estimate is therefore monotone
/// in `samples`.
pub fn multiplier_norm_estimate(
    f: &SpectralField,
    params: &BesovParams,
    partition: &Partition,
    samples: usize,
    seed: u64,
    spec: &RandomFieldSpec,
) -> Result<MultiplierEstimate> {
    if f.rank() != Rank::Scalar {
        return Err(Error::Mismatch("multiplier must be a scalar field".into()));
    }
    let grid = *f.grid();
    let lp = LittlewoodPaley::new(grid, *partition);
    let witness = SpectralField::from_fn(grid, Rank::Scalar, |x, _| (grid.frequency_scale() * x[0]).cos());
    let mut best = (f64::NEG_INFINITY, 0usize);
    for i in 0..=samples {
        let psi = if i == 0 {
            witness.clone()
        } else {
            random_field(grid, Rank::Scalar, spec, derive_seed(seed, i as u64))?
        };
        let norm = lp.besov(&psi, params);
        if norm == 0.0 {
            continue;
        }
        let psi = psi.scale(1.0 / norm);
        let v = lp.besov(&psi.product_dealiased(f), params);
        if v > best.0 {
            best = (v, i);
        }
    }
    Ok(MultiplierEstimate {
        value: best.0,
        witness: best.1,
        samples,
    })
}

/// Uniformly sampled trajectory of fields.
#[derive(Clone, Debug)]
pub struct TimeSeriesField {
    times: Vec<f64>,
    samples: Vec<SpectralField>,
}

impl TimeSeriesField {
    pub fn new(times: Vec<f64>, samples: Vec<SpectralField>) -> Result<Self> {
        if times.is_empty() || times.len() != samples.len() {
            return Err(Error::Mismatch(format!(
                "{} times for {} samples",
                times.len(),
                samples.len()
            )));
        }
        if times.len() > 1 {
            let dt = times[1] - times[0];
            if !(dt > 0.0) {
                return Err(Error::InvalidParameter("sample times must increase".into()));
            }
            for (k, t) in times.iter().enumerate() {
                if (t - (times[0] + k as f64 * dt)).abs() > 1e-9 * dt.max(t.abs()) {
                    return Err(Error::InvalidParameter("sample times must be uniform".into()));
                }
            }
        }
        let first = &samples[0];
        if samples.iter().any(|s| !s.same_layout(first)) {
            return Err(Error::Mismatch("samples differ in grid or rank".into()));
        }
        Ok(Self { times, samples })
    }

    /// Samples at `t_k = k T / steps`, `k = 0..=steps`.
    pub fn uniform(horizon: f64, samples: Vec<SpectralField>) -> Result<Self> {
        let steps = samples.len().saturating_sub(1).max(1);
        let times = (0..samples.len())
            .map(|k| horizon * k as f64 / steps as f64)
            .collect();
        Self::new(times, samples)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn samples(&self) -> &[SpectralField] {
        &self.samples
    }

    pub fn sample(&self, k: usize) -> &SpectralField {
        &self.samples[k]
    }

    pub fn last(&self) -> &SpectralField {
        self.samples.last().expect("non-empty series")
    }

    pub fn grid(&self) -> &Grid {
        self.samples[0].grid()
    }

    pub fn rank(&self) -> Rank {
        self.samples[0].rank()
    }

    pub fn dt(&self) -> f64 {
        if self.times.len() < 2 {
            0.0
        } else {
            self.times[1] - self.times[0]
        }
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("non-empty series") - self.times[0]
    }

    pub fn same_sampling(&self, other: &TimeSeriesField) -> bool {
        self.times.len() == other.times.len()
            && self
                .times
                .iter()
                .zip(&other.times)
                .all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + a.abs()))
    }

    pub fn map(&self, f: impl Fn(usize, &SpectralField) -> SpectralField) -> TimeSeriesField {
        Self {
            times: self.times.clone(),
            samples: self.samples.iter().enumerate().map(|(k, s)| f(k, s)).collect(),
        }
    }

    pub fn sub(&self, other: &TimeSeriesField) -> Result<TimeSeriesField> {
        if !self.same_sampling(other) {
            return Err(Error::Mismatch("series sampled at different times".into()));
        }
        Ok(self.map(|k, s| s.sub(&other.samples[k])))
    }

    /// Second-order finite-difference time derivative: centered inside,
    /// one-sided three-point stencils at the ends.
    pub fn time_derivative(&self) -> Result<TimeSeriesField> {
        let m = self.len();
        if m < 3 {
            return Err(Error::InvalidParameter("need at least 3 samples to difference".into()));
        }
        let h = self.dt();
        let s = &self.samples;
        Ok(self.map(|k, _| {
            if k == 0 {
                s[0].scale(-3.0).axpy(4.0, &s[1]).axpy(-1.0, &s[2]).scale(0.5 / h)
            } else if k == m - 1 {
                s[m - 1].scale(3.0).axpy(-4.0, &s[m - 2]).axpy(1.0, &s[m - 3]).scale(0.5 / h)
            } else {
                s[k + 1].sub(&s[k - 1]).scale(0.5 / h)
            }
        }))
    }

    /// Resamples every snapshot onto `grid`.
    pub fn resample(&self, grid: Grid) -> Result<TimeSeriesField> {
        let samples = self
            .samples
            .iter()
            .map(|s| s.resample(grid))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            times: self.times.clone(),
            samples,
        })
    }
}

/// `L^inf_T(B^s)` by the maximum over samples.
pub fn linf_time(lp: &LittlewoodPaley, u: &TimeSeriesField, params: &BesovParams) -> f64 {
    u.samples().iter().map(|s| lp.besov(s, params)).fold(0.0, f64::max)
}

/// `L^1_T` of `||nabla^order u(t)||_{B^s}` by the trapezoid rule.
pub fn l1_time(lp: &LittlewoodPaley, u: &TimeSeriesField, order: usize, params: &BesovParams) -> f64 {
    let vals: Vec<f64> = u
        .samples()
        .iter()
        .map(|s| lp.besov_derivative(s, order, params))
        .collect();
    trapezoid(&vals, u.dt())
}

/// The three parts of the solution-space norm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpNorm {
    pub sup: f64,
    pub dt_l1: f64,
    pub hessian_l1: f64,
}

impl EpNorm {
    pub fn total(&self) -> f64 {
        self.sup + self.dt_l1 + self.hessian_l1
    }
}

/// `||u||_{L^inf(B^s)} + ||d_t u||_{L^1(B^s)} + ||nabla^2 u||_{L^1(B^s)}`,
/// with `s` taken from `params` (the solution index is `n/p - 1`).
pub fn ep_norm(
    u: &TimeSeriesField,
    du_dt: &TimeSeriesField,
    params: &BesovParams,
    partition: &Partition,
) -> Result<EpNorm> {
    if !u.same_sampling(du_dt) {
        return Err(Error::Mismatch("u and du/dt sampled at different times".into()));
    }
    if !u.sample(0).same_layout(du_dt.sample(0)) {
        return Err(Error::Mismatch("u and du/dt differ in layout".into()));
    }
    let lp = LittlewoodPaley::new(*u.grid(), *partition);
    Ok(EpNorm {
        sup: linf_time(&lp, u, params),
        dt_l1: l1_time(&lp, du_dt, 0, params),
        hessian_l1: l1_time(&lp, u, 2, params),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;

    fn grid() -> Grid {
        Grid::standard(2, 64).unwrap()
    }

    #[test]
    fn band_for_standard_torus() {
        let lp = LittlewoodPaley::new(grid(), Partition::default());
        assert_eq!(lp.j_min(), 0);
        assert_eq!(lp.j_max(), 6);
    }

    #[test]
    fn mode_at_dyadic_radius_is_one_block() {
        let g = grid();
        let lp = LittlewoodPaley::new(g, Partition::default());
        let f = SpectralField::from_fn(g, Rank::Scalar, |x, _| (8.0 * x[1]).sin());
        let b = lp.block(&f, 3);
        assert!(b.max_abs_diff(&f) < 1e-14);
        for j in [0, 1, 2, 4, 5, 6] {
            assert!(lp.block(&f, j).max_abs() < 1e-14);
        }
    }

    #[test]
    fn low_cutoff_keeps_mode_below_threshold() {
        let g = grid();
        let lp = LittlewoodPaley::new(g, Partition::default());
        let f = SpectralField::from_fn(g, Rank::Scalar, |x, _| 2.0 + (4.0 * x[0]).cos());
        assert!(lp.low(&f, 4).max_abs_diff(&f) < 1e-14);
        let only_mean = lp.low(&f, 2);
        assert!(only_mean.shift(-2.0).max_abs() < 1e-14);
    }

    #[test]
    fn besov_of_single_mode() {
        let g = grid();
        let f = SpectralField::from_fn(g, Rank::Scalar, |x, _| (4.0 * x[0]).cos());
        let p = BesovParams::new(0.5, 2.0).unwrap();
        let norm = besov_norm(&f, &p, &Partition::default());
        let expect = 2f64.powf(2.0 * 0.5) * (2.0 * PI * PI).sqrt();
        assert!((norm - expect).abs() < 1e-12 * expect);
        // quadrature path agrees with the Parseval path
        let lp = LittlewoodPaley::new(g, Partition::default());
        let direct: f64 = lp.block_norms(&f, 2.000000001, 0).iter().sum();
        assert!((direct - (2.0 * PI * PI).sqrt()).abs() < 1e-7);
    }

    #[test]
    fn derivative_norm_paths_agree() {
        let g = Grid::standard(2, 32).unwrap();
        let f = random_field(g, Rank::Vector, &RandomFieldSpec::default(), 5).unwrap();
        let lp = LittlewoodPaley::new(g, Partition::default());
        for order in 0..3 {
            let a = lp.block_norms(&f, 2.0, order);
            let b = lp.block_norms(&f, 2.0 + 1e-12, order);
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-9 * (1.0 + x));
            }
        }
    }

    #[test]
    fn scaling_ratio_is_one_at_critical_index() {
        let g = grid();
        let f = random_field(g, Rank::Scalar, &RandomFieldSpec::default(), 9).unwrap();
        let p = BesovParams::critical(2, 2.0).unwrap();
        let r = critical_scaling_ratio(&f, &p, &Partition::default()).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn multiplier_estimate_of_constant() {
        let g = Grid::standard(2, 32).unwrap();
        let f = SpectralField::constant(g, 1.7);
        let p = BesovParams::critical(2, 2.0).unwrap();
        let est = multiplier_norm_estimate(&f, &p, &Partition::default(), 5, 3, &RandomFieldSpec::default()).unwrap();
        assert!((est.value - 1.7).abs() < 1e-12);
    }

    #[test]
    fn time_derivative_is_second_order() {
        let g = Grid::standard(1, 8).unwrap();
        let series = |m: usize| {
            let samples = (0..=m)
                .map(|k| SpectralField::constant(g, (k as f64 / m as f64).sin()))
                .collect();
            TimeSeriesField::uniform(1.0, samples).unwrap()
        };
        let err = |m: usize| {
            let s = series(m);
            let d = s.time_derivative().unwrap();
            (0..=m)
                .map(|k| (d.sample(k).mean(0) - (k as f64 / m as f64).cos()).abs())
                .fold(0.0, f64::max)
        };
        let ratio = err(16) / err(32);
        assert!(ratio > 3.5, "ratio {ratio}");
    }
}
