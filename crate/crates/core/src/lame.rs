//! Linear parabolic solvers: the constant-coefficient Lamé system, solved
//! exactly per Fourier mode, and the variable-coefficient heat and Lamé
//! systems, stepped with ETD2RK around the frozen-mean constant operator.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::littlewood_paley::{BesovParams, LittlewoodPaley, Partition, TimeSeriesField};
use crate::quadrature::{cumulative_trapezoid, trapezoid};
use crate::spectral::{
    compressible_split, deformation, divergence, gradient, laplacian, Grid, Rank, SpectralField,
};

/// `phi_1(z) = (e^z - 1) / z`.
pub fn phi1(z: f64) -> f64 {
    if z.abs() < 0.5 {
        series(z, 1)
    } else {
        z.exp_m1() / z
    }
}

/// `phi_2(z) = (e^z - 1 - z) / z^2`.
pub fn phi2(z: f64) -> f64 {
    if z.abs() < 0.5 {
        series(z, 2)
    } else {
        (z.exp_m1() - z) / (z * z)
    }
}

// sum_k z^k / (k + shift)!
fn series(z: f64, shift: u32) -> f64 {
    let mut term = 1.0;
    for k in 1..=shift {
        term /= k as f64;
    }
    let mut sum = term;
    for k in 1..30 {
        term *= z / (k + shift) as f64;
        sum += term;
        if term.abs() < 1e-18 * sum.abs() {
            break;
        }
    }
    sum
}

/// Norms used by the solve reports: `B^s_{p,1}` with the given partition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormSpec {
    pub params: BesovParams,
    pub partition: Partition,
}

impl NormSpec {
    /// `s = n/p - 1`, `p = 2`.
    pub fn solution(dim: usize) -> Self {
        Self {
            params: BesovParams { s: dim as f64 / 2.0 - 1.0, p: 2.0 },
            partition: Partition::default(),
        }
    }
}

/// Exact per-mode propagators of `d_t u = mu Lap u + mu' grad div u`
/// (vectors) or `d_t u = mu Lap u` (scalars) over one step `h`.
///
/// Each mode splits into the part along `xi` (rate `(mu + mu')|xi|^2`) and
/// the rest (rate `mu |xi|^2`).
#[derive(Clone, Debug)]
pub(crate) struct ModeStepper {
    grid: Grid,
    rank: Rank,
    h: f64,
    unit: Vec<[f64; 3]>,
    // (rate, e^{-rate h}, phi1, phi2) along and across xi
    par: Vec<[f64; 4]>,
    perp: Vec<[f64; 4]>,
}

fn factors(rate: f64, h: f64) -> [f64; 4] {
    let z = -rate * h;
    [rate, z.exp(), phi1(z), phi2(z)]
}

impl ModeStepper {
    pub(crate) fn new(grid: Grid, rank: Rank, mu: f64, mu_prime: f64, h: f64) -> Self {
        let len = grid.len();
        let mut unit = vec![[0.0; 3]; len];
        let mut par = vec![[0.0; 4]; len];
        let mut perp = vec![[0.0; 4]; len];
        for idx in 0..len {
            let xi = grid.xi(idx);
            let xo = grid.xi_odd(idx);
            let k2 = xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2];
            let ko2 = xo[0] * xo[0] + xo[1] * xo[1] + xo[2] * xo[2];
            if ko2 > 0.0 && rank == Rank::Vector {
                let r = ko2.sqrt();
                unit[idx] = [xo[0] / r, xo[1] / r, xo[2] / r];
            }
            perp[idx] = factors(mu * k2, h);
            par[idx] = factors(mu * k2 + mu_prime * ko2, h);
        }
        Self { grid, rank, h, unit, par, perp }
    }

    /// `out += g(L) v` where `g` is the `which`-th factor (0 = rate with a
    /// minus sign, i.e. the generator; 1 = exponential; 2 = h phi1; 3 = h phi2).
    fn apply(&self, which: usize, v: &[Complex64], out: &mut [Complex64]) {
        let len = self.grid.len();
        let d = self.rank.components(self.grid.dim());
        let scale = match which {
            0 => -1.0,
            1 => 1.0,
            _ => self.h,
        };
        for idx in 0..len {
            let e = &self.unit[idx];
            let gp = scale * self.par[idx][which];
            let gq = scale * self.perp[idx][which];
            let mut dot = Complex64::new(0.0, 0.0);
            for c in 0..d {
                dot += v[c * len + idx] * e[c];
            }
            for c in 0..d {
                let along = dot * e[c];
                let x = v[c * len + idx];
                out[c * len + idx] += along * gp + (x - along) * gq;
            }
        }
    }

    fn generator(&self, v: &SpectralField) -> SpectralField {
        let mut out = vec![Complex64::new(0.0, 0.0); v.coeffs().len()];
        self.apply(0, v.coeffs(), &mut out);
        SpectralField::from_coefficients(self.grid, v.rank(), out)
    }

    /// One step of `y' = L y + g(t)` with `g` linear in time between the
    /// nodes: `e^{hL} y + h phi1 g0 + h phi2 (g1 - g0)`.
    fn step(&self, y: &[Complex64], g0: Option<&[Complex64]>, g1: Option<&[Complex64]>) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); y.len()];
        self.apply(1, y, &mut out);
        if let Some(g0) = g0 {
            self.apply(2, g0, &mut out);
            if let Some(g1) = g1 {
                let dg: Vec<Complex64> = g1.iter().zip(g0).map(|(a, b)| a - b).collect();
                self.apply(3, &dg, &mut out);
            }
        } else if let Some(g1) = g1 {
            self.apply(3, g1, &mut out);
        }
        out
    }
}

/// Coefficients of `d_t u - 2a div(mu D(u)) - b grad(lambda div u) = f`.
#[derive(Clone, Debug)]
pub struct LameCoefficients {
    pub a: SpectralField,
    pub b: SpectralField,
    pub lambda: SpectralField,
    pub mu: SpectralField,
    /// `min(inf a mu, inf (2 a mu + b lambda))`.
    pub alpha: f64,
    /// Frozen-mean shear viscosity `mean(a mu)`.
    pub mu_bar: f64,
    /// Frozen-mean `mean(a mu + b lambda)`.
    pub mu_prime_bar: f64,
}

impl LameCoefficients {
    pub fn new(a: SpectralField, b: SpectralField, lambda: SpectralField, mu: SpectralField) -> Result<Self> {
        for f in [&a, &b, &lambda, &mu] {
            if f.rank() != Rank::Scalar || !f.grid().same_shape(a.grid()) {
                return Err(Error::Mismatch("coefficients must be scalar fields on one grid".into()));
            }
        }
        let amu = a.mul(&mu);
        let long = amu.scale(2.0).add(&b.mul(&lambda));
        let alpha = amu.min_value().min(long.min_value());
        if !(alpha > 0.0) {
            return Err(Error::NotElliptic(alpha));
        }
        let mu_bar = amu.mean(0);
        let mu_prime_bar = long.mean(0) - mu_bar;
        if !(mu_bar > 0.0 && mu_bar + mu_prime_bar > 0.0) {
            return Err(Error::NotElliptic(mu_bar.min(mu_bar + mu_prime_bar)));
        }
        Ok(Self {
            a,
            b,
            lambda,
            mu,
            alpha,
            mu_bar,
            mu_prime_bar,
        })
    }

    /// `a = b = 1`, `mu`, `lambda = mu' - mu`: the operator
    /// `mu Lap + mu' grad div`.
    pub fn constant(grid: Grid, mu: f64, mu_prime: f64) -> Result<Self> {
        let one = SpectralField::constant(grid, 1.0);
        Self::new(
            one.clone(),
            one,
            SpectralField::constant(grid, mu_prime - mu),
            SpectralField::constant(grid, mu),
        )
    }

    pub fn grid(&self) -> &Grid {
        self.a.grid()
    }

    /// `a mu` and `2 a mu + b lambda`.
    pub fn diffusivities(&self) -> (SpectralField, SpectralField) {
        let amu = self.a.mul(&self.mu);
        let long = amu.scale(2.0).add(&self.b.mul(&self.lambda));
        (amu, long)
    }

    /// `(mu grad a, a grad mu, lambda grad b, b grad lambda)` with dealiased
    /// products.
    pub fn gradient_products(&self) -> [SpectralField; 4] {
        [
            self.mu.product_dealiased(&gradient(&self.a)),
            self.a.product_dealiased(&gradient(&self.mu)),
            self.lambda.product_dealiased(&gradient(&self.b)),
            self.b.product_dealiased(&gradient(&self.lambda)),
        ]
    }

    /// `2a div(mu D(u)) + b grad(lambda div u)`.
    pub fn apply(&self, u: &SpectralField) -> SpectralField {
        let stress = self.mu.product_dealiased(&deformation(u));
        let shear = self
            .a
            .product_dealiased(&crate::spectral::tensor_divergence(&stress))
            .scale(2.0);
        let bulk = self
            .b
            .product_dealiased(&gradient(&self.lambda.product_dealiased(&divergence(u))));
        shear.add(&bulk)
    }

    /// Largest deviation of `a mu` and `2 a mu + b lambda` from their means.
    pub fn deviation(&self) -> f64 {
        let (amu, long) = self.diffusivities();
        let dev = |f: &SpectralField| {
            let m = f.mean(0);
            f.values().iter().map(|v| (v - m).abs()).fold(0.0, f64::max)
        };
        dev(&amu).max(dev(&long))
    }

    pub fn is_constant(&self) -> bool {
        self.deviation() == 0.0
            && [&self.a, &self.b, &self.lambda, &self.mu]
                .iter()
                .all(|f| f.values().iter().all(|v| *v == f.values()[0]))
    }
}

/// Frequency threshold `m` splitting the coefficients into a smooth part
/// `S_m` and a small rough remainder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSelection {
    pub m: i32,
    pub eta: f64,
    pub alpha: f64,
    /// `min(inf S_m(a mu), inf S_m(2 a mu + b lambda))`.
    pub achieved_lowfreq_inf: f64,
    /// `||(Id - S_m)(mu grad a, a grad mu, lambda grad b, b grad lambda)||_{B^{n/p-1}}`.
    pub achieved_highfreq_norm: f64,
    /// `||S_m(...)||_{B^{n/p}}` of the same products.
    pub lowfreq_gradient_norm: f64,
    /// `(m, lowfreq inf, highfreq norm)` for every scanned `m`.
    pub scan: Vec<(i32, f64, f64)>,
}

/// Smallest `m` in `[j_min, j_max + 1]` with
/// `inf S_m(a mu), inf S_m(2a mu + b lambda) >= alpha / 2` and the rough
/// part of the coefficient gradients at most `eta alpha`.
pub fn select_threshold(coeffs: &LameCoefficients, eta: f64, p: f64, partition: &Partition) -> Result<ThresholdSelection> {
    if !(eta > 0.0) {
        return Err(Error::InvalidParameter(format!("eta = {eta}")));
    }
    let grid = *coeffs.grid();
    let lp = LittlewoodPaley::new(grid, *partition);
    let dim = grid.dim();
    let sol = BesovParams::new(dim as f64 / p - 1.0, p)?;
    let crit = BesovParams::critical(dim, p)?;
    let (amu, long) = coeffs.diffusivities();
    let prods = coeffs.gradient_products();
    let alpha = coeffs.alpha;
    let mut scan = Vec::new();
    let mut chosen = None;
    for m in lp.j_min()..=lp.j_max() + 1 {
        let inf = lp.low(&amu, m).min_value().min(lp.low(&long, m).min_value());
        let high: f64 = prods.iter().map(|f| lp.besov(&lp.high(f, m), &sol)).sum();
        scan.push((m, inf, high));
        if chosen.is_none() && inf >= alpha / 2.0 && high <= eta * alpha {
            chosen = Some((m, inf, high));
        }
    }
    let Some((m, inf, high)) = chosen else {
        return Err(Error::NoThreshold(format!(
            "no m in [{}, {}] meets the threshold conditions with eta = {eta}",
            lp.j_min(),
            lp.j_max() + 1
        )));
    };
    let low_norm = prods.iter().map(|f| lp.besov(&lp.low(f, m), &crit)).sum();
    Ok(ThresholdSelection {
        m,
        eta,
        alpha,
        achieved_lowfreq_inf: inf,
        achieved_highfreq_norm: high,
        lowfreq_gradient_norm: low_norm,
        scan,
    })
}

/// Which equation a [`SolveReport`] solved.
#[derive(Clone, Debug)]
pub enum Equation {
    ConstantLame { mu: f64, mu_prime: f64 },
    VariableLame(LameCoefficients),
    /// `d_t u - a div(b grad u) = f`.
    Heat { a: SpectralField, b: SpectralField },
}

impl Equation {
    /// Right-hand side `d_t u` without the forcing, assembled with the
    /// physical-space operators.
    pub fn operator(&self, u: &SpectralField) -> SpectralField {
        match self {
            Equation::ConstantLame { mu, mu_prime } => laplacian(u)
                .scale(*mu)
                .add(&gradient(&divergence(u)).scale(*mu_prime)),
            Equation::VariableLame(c) => c.apply(u),
            Equation::Heat { a, b } => heat_operator(a, b, u),
        }
    }

    /// Dissipation weight in front of `||u||_{L^1(B^{s+2})}`.
    pub fn dissipation(&self) -> f64 {
        match self {
            Equation::ConstantLame { mu, mu_prime } => mu.min(mu + mu_prime),
            Equation::VariableLame(c) => c.alpha,
            Equation::Heat { a, b } => a.mul(b).min_value(),
        }
    }
}

fn heat_operator(a: &SpectralField, b: &SpectralField, u: &SpectralField) -> SpectralField {
    a.product_dealiased(&divergence(&b.product_dealiased(&gradient(u))))
}

/// Solution trajectory plus the quantities of the a priori estimate
/// `||u||_{L^inf(B^s)} + kappa ||u||_{L^1(B^{s+2})} <= C (||u0||_{B^s} + ||f||_{L^1(B^s)})`.
#[derive(Clone, Debug)]
pub struct SolveReport {
    pub equation: Equation,
    pub norms: NormSpec,
    pub solution: TimeSeriesField,
    pub du_dt: TimeSeriesField,
    pub forcing: Option<TimeSeriesField>,
    /// `||u(t_k)||_{B^s}`.
    pub sup_norms: Vec<f64>,
    /// `int_0^{t_k} ||grad^2 u||_{B^s}`.
    pub l1_norms: Vec<f64>,
    pub initial_norm: f64,
    pub forcing_l1: f64,
    /// `kappa` in the estimate.
    pub dissipation: f64,
    /// Fitted `C`: left side over right side of the estimate.
    pub decay_constant: f64,
    /// `(||d||_{B^s}, ||Omega||_{B^s})` at each sample, vector solves only.
    pub split_norms: Vec<(f64, f64)>,
}

impl SolveReport {
    fn assemble(
        equation: Equation,
        norms: NormSpec,
        solution: TimeSeriesField,
        du_dt: TimeSeriesField,
        forcing: Option<TimeSeriesField>,
    ) -> Self {
        let lp = LittlewoodPaley::new(*solution.grid(), norms.partition);
        let sup_norms: Vec<f64> = solution.samples().iter().map(|u| lp.besov(u, &norms.params)).collect();
        let hess: Vec<f64> = solution
            .samples()
            .iter()
            .map(|u| lp.besov_derivative(u, 2, &norms.params))
            .collect();
        let l1_norms = cumulative_trapezoid(&hess, solution.dt());
        let forcing_l1 = forcing.as_ref().map_or(0.0, |f| {
            let v: Vec<f64> = f.samples().iter().map(|x| lp.besov(x, &norms.params)).collect();
            trapezoid(&v, f.dt())
        });
        let split_norms = if solution.rank() == Rank::Vector {
            solution
                .samples()
                .iter()
                .map(|u| {
                    let (d, om) = compressible_split(u);
                    (lp.besov(&d, &norms.params), lp.besov(&om, &norms.params))
                })
                .collect()
        } else {
            Vec::new()
        };
        let dissipation = equation.dissipation();
        let initial_norm = sup_norms[0];
        let lhs = sup_norms.iter().copied().fold(0.0, f64::max) + dissipation * l1_norms.last().copied().unwrap_or(0.0);
        let rhs = initial_norm + forcing_l1;
        let decay_constant = if rhs > 0.0 { lhs / rhs } else { 0.0 };
        Self {
            equation,
            norms,
            solution,
            du_dt,
            forcing,
            sup_norms,
            l1_norms,
            initial_norm,
            forcing_l1,
            dissipation,
            decay_constant,
            split_norms,
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.sup_norms.iter().copied().fold(0.0, f64::max)
    }

    pub fn l1_norm(&self) -> f64 {
        self.l1_norms.last().copied().unwrap_or(0.0)
    }
}

fn check_forcing(u0: &SpectralField, f: Option<&TimeSeriesField>, horizon: f64, steps: usize) -> Result<()> {
    if steps == 0 || !(horizon > 0.0) {
        return Err(Error::InvalidParameter(format!("horizon {horizon} with {steps} steps")));
    }
    if let Some(f) = f {
        if f.len() != steps + 1 || (f.horizon() - horizon).abs() > 1e-12 * horizon {
            return Err(Error::Mismatch(format!(
                "forcing has {} samples over {}, expected {} over {horizon}",
                f.len(),
                f.horizon(),
                steps + 1
            )));
        }
        if !f.sample(0).same_layout(u0) {
            return Err(Error::Mismatch("forcing and initial datum differ in layout".into()));
        }
    }
    Ok(())
}

/// `d_t u - mu Lap u - mu' grad div u = f`, exact per mode for `f` linear
/// in time between the samples (so exact for `f = 0`).
pub fn solve_constant_lame(
    u0: &SpectralField,
    f: Option<&TimeSeriesField>,
    mu: f64,
    mu_prime: f64,
    horizon: f64,
    steps: usize,
    norms: &NormSpec,
) -> Result<SolveReport> {
    if !(mu > 0.0 && mu + mu_prime > 0.0) {
        return Err(Error::NotElliptic(mu.min(mu + mu_prime)));
    }
    if u0.rank() != Rank::Vector {
        return Err(Error::Mismatch("Lame solver expects a vector field".into()));
    }
    check_forcing(u0, f, horizon, steps)?;
    let h = horizon / steps as f64;
    let stepper = ModeStepper::new(*u0.grid(), Rank::Vector, mu, mu_prime, h);
    let (sol, dudt) = run_exact(&stepper, u0, f, steps)?;
    Ok(SolveReport::assemble(
        Equation::ConstantLame { mu, mu_prime },
        *norms,
        TimeSeriesField::uniform(horizon, sol)?,
        TimeSeriesField::uniform(horizon, dudt)?,
        f.cloned(),
    ))
}

fn run_exact(
    stepper: &ModeStepper,
    u0: &SpectralField,
    f: Option<&TimeSeriesField>,
    steps: usize,
) -> Result<(Vec<SpectralField>, Vec<SpectralField>)> {
    let grid = *u0.grid();
    let rank = u0.rank();
    let mut sol = Vec::with_capacity(steps + 1);
    let mut dudt = Vec::with_capacity(steps + 1);
    let mut y = u0.coeffs().to_vec();
    for k in 0..=steps {
        if k > 0 {
            let g0 = f.map(|f| f.sample(k - 1).coeffs());
            let g1 = f.map(|f| f.sample(k).coeffs());
            y = stepper.step(&y, g0, g1);
        }
        let u = SpectralField::from_coefficients(grid, rank, y.clone());
        let mut d = stepper.generator(&u);
        if let Some(f) = f {
            d = d.add(f.sample(k));
        }
        sol.push(u);
        dudt.push(d);
    }
    Ok((sol, dudt))
}

/// Streaming variant of [`solve_constant_lame`] with `f = 0` that keeps only
/// the estimate quantities, on an arbitrary increasing time grid starting at
/// 0 (see [`graded_times`] for stiff runs). Returns
/// `(sup ||u||, int ||grad^2 u||, ||u0||)`.
pub fn constant_lame_estimate(
    u0: &SpectralField,
    mu: f64,
    mu_prime: f64,
    times: &[f64],
    norms: &NormSpec,
) -> Result<(f64, f64, f64)> {
    if !(mu > 0.0 && mu + mu_prime > 0.0) {
        return Err(Error::NotElliptic(mu.min(mu + mu_prime)));
    }
    if u0.rank() != Rank::Vector {
        return Err(Error::Mismatch("Lame solver expects a vector field".into()));
    }
    if times.len() < 2 || times[0] != 0.0 || times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter("time grid must start at 0 and increase".into()));
    }
    let grid = *u0.grid();
    let lp = LittlewoodPaley::new(grid, norms.partition);
    let mut y = u0.coeffs().to_vec();
    let first = lp.besov(u0, &norms.params);
    let mut sup = first;
    let mut prev_hess = lp.besov_derivative(u0, 2, &norms.params);
    let mut integral = 0.0;
    let mut stepper: Option<ModeStepper> = None;
    for w in times.windows(2) {
        let h = w[1] - w[0];
        if stepper.as_ref().is_none_or(|s| (s.h - h).abs() > 1e-9 * h) {
            stepper = Some(ModeStepper::new(grid, Rank::Vector, mu, mu_prime, h));
        }
        y = stepper.as_ref().expect("set above").step(&y, None, None);
        let (comps, s) = (grid.dim(), norms.params.s);
        let (n0, hess) = if norms.params.p == 2.0 {
            (lp.besov_l2_coeffs(&y, comps, 0, s), lp.besov_l2_coeffs(&y, comps, 2, s))
        } else {
            let u = SpectralField::from_coefficients(grid, Rank::Vector, y.clone());
            (lp.besov(&u, &norms.params), lp.besov_derivative(&u, 2, &norms.params))
        };
        sup = sup.max(n0);
        integral += 0.5 * h * (hess + prev_hess);
        prev_hess = hess;
    }
    Ok((sup, integral, first))
}

/// Piecewise uniform grid on `[0, T]`: `per_level` equal steps on
/// `[0, T 2^-levels]`, then `per_level` steps on each `[T 2^-i-1, T 2^-i]`.
/// Samples cluster near `t = 0`, where the high modes of a stiff solve
/// decay, while only `levels + 1` distinct step sizes occur.
pub fn graded_times(horizon: f64, levels: u32, per_level: usize) -> Vec<f64> {
    let mut times = vec![0.0];
    let mut start = 0.0;
    for i in (0..=levels).rev() {
        let end = horizon * 2f64.powi(-(i as i32));
        let h = (end - start) / per_level as f64;
        for k in 1..=per_level {
            times.push(if k == per_level { end } else { start + k as f64 * h });
        }
        start = end;
    }
    times
}

/// Step limit `C_cfl / (delta |xi_max|^2)` of the explicit part, where
/// `delta` is the largest deviation of the diffusivities from their means.
pub fn explicit_step_limit(grid: &Grid, deviation: f64, cfl: f64) -> f64 {
    let k = grid.dealias_xi_max();
    if deviation <= 0.0 {
        f64::INFINITY
    } else {
        cfl / (deviation * k * k)
    }
}

pub const DEFAULT_CFL: f64 = 0.5;

/// ETD2RK around the exact stepper with explicit part `explicit`.
fn run_etd2(
    stepper: &ModeStepper,
    u0: &SpectralField,
    f: Option<&TimeSeriesField>,
    steps: usize,
    explicit: impl Fn(&SpectralField) -> SpectralField,
) -> (Vec<SpectralField>, Vec<SpectralField>) {
    let grid = *u0.grid();
    let rank = u0.rank();
    let forced = |n: SpectralField, k: usize| match f {
        Some(f) => n.add(f.sample(k)),
        None => n,
    };
    let mut sol = Vec::with_capacity(steps + 1);
    let mut dudt = Vec::with_capacity(steps + 1);
    let mut u = u0.clone();
    let mut g = forced(explicit(&u), 0);
    dudt.push(stepper.generator(&u).add(&g));
    sol.push(u.clone());
    for k in 1..=steps {
        let pred = SpectralField::from_coefficients(grid, rank, stepper.step(u.coeffs(), Some(g.coeffs()), None));
        let g_pred = forced(explicit(&pred), k);
        let mut y = pred.coeffs().to_vec();
        let dg: Vec<Complex64> = g_pred.coeffs().iter().zip(g.coeffs()).map(|(a, b)| a - b).collect();
        stepper.apply(3, &dg, &mut y);
        u = SpectralField::from_coefficients(grid, rank, y);
        dudt.push(stepper.generator(&u).add(&g_pred));
        g = forced(explicit(&u), k);
        sol.push(u.clone());
    }
    (sol, dudt)
}

/// `d_t u - a div(b grad u) = f` for scalar `u`, with the implicit part
/// `mean(a b) Lap` and the remainder explicit. `threshold` is checked
/// against the coefficients when given.
pub fn solve_variable_heat(
    a: &SpectralField,
    b: &SpectralField,
    u0: &SpectralField,
    f: Option<&TimeSeriesField>,
    horizon: f64,
    steps: usize,
    norms: &NormSpec,
) -> Result<SolveReport> {
    if u0.rank() != Rank::Scalar || a.rank() != Rank::Scalar || b.rank() != Rank::Scalar {
        return Err(Error::Mismatch("heat solver expects scalar fields".into()));
    }
    check_forcing(u0, f, horizon, steps)?;
    let ab = a.mul(b);
    let alpha = ab.min_value();
    if !(alpha > 0.0) {
        return Err(Error::NotElliptic(alpha));
    }
    let cbar = ab.mean(0);
    let dev = ab.values().iter().map(|v| (v - cbar).abs()).fold(0.0, f64::max);
    let h = horizon / steps as f64;
    let limit = explicit_step_limit(u0.grid(), dev, DEFAULT_CFL);
    if h > limit {
        return Err(Error::Cfl { dt: h, limit });
    }
    let stepper = ModeStepper::new(*u0.grid(), Rank::Scalar, cbar, 0.0, h);
    let (sol, dudt) = run_etd2(&stepper, u0, f, steps, |u| {
        heat_operator(a, b, u).sub(&laplacian(u).scale(cbar)).project()
    });
    Ok(SolveReport::assemble(
        Equation::Heat { a: a.clone(), b: b.clone() },
        *norms,
        TimeSeriesField::uniform(horizon, sol)?,
        TimeSeriesField::uniform(horizon, dudt)?,
        f.cloned(),
    ))
}

/// `d_t u - 2a div(mu D(u)) - b grad(lambda div u) = f`.
///
/// The implicit part is the constant Lamé operator with the frozen means
/// `(mean(a mu), mean(a mu + b lambda))`; the rest is explicit.
pub fn solve_variable_lame(
    coeffs: &LameCoefficients,
    u0: &SpectralField,
    f: Option<&TimeSeriesField>,
    horizon: f64,
    steps: usize,
    threshold: Option<&ThresholdSelection>,
    norms: &NormSpec,
) -> Result<SolveReport> {
    if u0.rank() != Rank::Vector || !u0.grid().same_shape(coeffs.grid()) {
        return Err(Error::Mismatch("Lame solver expects a vector field on the coefficient grid".into()));
    }
    check_forcing(u0, f, horizon, steps)?;
    if let Some(t) = threshold {
        if t.achieved_lowfreq_inf < coeffs.alpha / 2.0 || t.achieved_highfreq_norm > t.eta * coeffs.alpha {
            return Err(Error::NoThreshold(format!("threshold m = {} does not hold for these coefficients", t.m)));
        }
    }
    let h = horizon / steps as f64;
    let limit = explicit_step_limit(u0.grid(), coeffs.deviation(), DEFAULT_CFL);
    if h > limit {
        return Err(Error::Cfl { dt: h, limit });
    }
    let (mb, mpb) = (coeffs.mu_bar, coeffs.mu_prime_bar);
    let stepper = ModeStepper::new(*u0.grid(), Rank::Vector, mb, mpb, h);
    let constant = coeffs.is_constant();
    let (sol, dudt) = run_etd2(&stepper, u0, f, steps, |u| {
        if constant {
            SpectralField::zeros(*u.grid(), Rank::Vector)
        } else {
            coeffs
                .apply(u)
                .sub(&laplacian(u).scale(mb))
                .sub(&gradient(&divergence(u)).scale(mpb))
                .project()
        }
    });
    Ok(SolveReport::assemble(
        Equation::VariableLame(coeffs.clone()),
        *norms,
        TimeSeriesField::uniform(horizon, sol)?,
        TimeSeriesField::uniform(horizon, dudt)?,
        f.cloned(),
    ))
}

/// `||d_t u - (operator(u) + f)||_{L^1_t(B^s)}` from the stored derivative.
pub fn dt_consistency(report: &SolveReport) -> f64 {
    let lp = LittlewoodPaley::new(*report.solution.grid(), report.norms.partition);
    let vals: Vec<f64> = (0..report.solution.len())
        .map(|k| {
            let mut r = report.equation.operator(report.solution.sample(k));
            if let Some(f) = &report.forcing {
                r = r.add(f.sample(k));
            }
            lp.besov(&report.du_dt.sample(k).sub(&r), &report.norms.params)
        })
        .collect();
    trapezoid(&vals, report.solution.dt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_field, RandomFieldSpec};

    fn grid(n: usize) -> Grid {
        Grid::standard(2, n).unwrap()
    }

    #[test]
    fn phi_functions_match_closed_forms() {
        for z in [-3.0, -0.6, -0.49, -1e-3, 0.0, 1e-6, 0.3] {
            let e: f64 = Float::exp(z);
            if z != 0.0 {
                assert!((phi1(z) - (e - 1.0) / z).abs() < 1e-9);
            }
            if z.abs() > 1e-2 {
                assert!((phi2(z) - (e - 1.0 - z) / (z * z)).abs() < 1e-9);
            }
        }
        assert_eq!(phi1(0.0), 1.0);
        assert_eq!(phi2(0.0), 0.5);
    }

    #[test]
    fn gradient_and_solenoidal_modes_decay_exactly() {
        let g = grid(16);
        let (mu, mup, k, t) = (0.7, 0.4, 3.0, 0.3);
        let grad = SpectralField::from_fn(g, Rank::Vector, |x, c| if c == 0 { k * (k * x[0]).cos() } else { 0.0 });
        let sol = SpectralField::from_fn(g, Rank::Vector, |x, c| if c == 1 { (k * x[0]).sin() } else { 0.0 });
        let ns = NormSpec::solution(2);
        let r1 = solve_constant_lame(&grad, None, mu, mup, t, 5, &ns).unwrap();
        let r2 = solve_constant_lame(&sol, None, mu, mup, t, 5, &ns).unwrap();
        let e1: f64 = Float::exp(-(mu + mup) * k * k * t);
        let e2: f64 = Float::exp(-mu * k * k * t);
        assert!(r1.solution.last().max_abs_diff(&grad.scale(e1)) < 1e-12);
        assert!(r2.solution.last().max_abs_diff(&sol.scale(e2)) < 1e-12);
        // no leakage between the invariant subspaces
        let (_, om) = compressible_split(r1.solution.last());
        assert!(om.max_abs() < 1e-12);
        assert!(dt_consistency(&r1) < 1e-10);
    }

    #[test]
    fn zero_data_gives_zero() {
        let g = grid(8);
        let r = solve_constant_lame(&SpectralField::zeros(g, Rank::Vector), None, 1.0, 0.0, 1.0, 4, &NormSpec::solution(2)).unwrap();
        assert_eq!(r.solution.last().max_abs(), 0.0);
        assert_eq!(dt_consistency(&r), 0.0);
    }

    #[test]
    fn constant_forcing_is_integrated_exactly() {
        // u' = -k^2 mu u + f with constant-in-time f, u0 = 0
        let g = grid(16);
        let (mu, k, t) = (0.5, 2.0, 0.8);
        let shape = SpectralField::from_fn(g, Rank::Vector, |x, c| if c == 1 { (k * x[0]).cos() } else { 0.0 });
        let f = TimeSeriesField::uniform(t, vec![shape.clone(); 4]).unwrap();
        let r = solve_constant_lame(&SpectralField::zeros(g, Rank::Vector), Some(&f), mu, 0.0, t, 3, &NormSpec::solution(2)).unwrap();
        let rate = mu * k * k;
        let exact = shape.scale((1.0 - Float::exp(-rate * t)) / rate);
        assert!(r.solution.last().max_abs_diff(&exact) < 1e-13);
    }

    #[test]
    fn viscosity_signs_are_checked() {
        let g = grid(8);
        let u = SpectralField::zeros(g, Rank::Vector);
        let ns = NormSpec::solution(2);
        assert!(solve_constant_lame(&u, None, 0.0, 1.0, 1.0, 2, &ns).is_err());
        assert!(solve_constant_lame(&u, None, 1.0, -1.0, 1.0, 2, &ns).is_err());
    }

    #[test]
    fn constant_coefficients_reduce_to_exact_solver() {
        let g = grid(16);
        let spec = RandomFieldSpec { max_wavenumber: 4, ..Default::default() };
        let u0 = random_field(g, Rank::Vector, &spec, 3).unwrap();
        let ns = NormSpec::solution(2);
        let c = LameCoefficients::constant(g, 0.8, 0.3).unwrap();
        let a = solve_variable_lame(&c, &u0, None, 0.2, 10, None, &ns).unwrap();
        let b = solve_constant_lame(&u0, None, 0.8, 0.3, 0.2, 10, &ns).unwrap();
        assert!(a.solution.last().max_abs_diff(b.solution.last()) < 1e-10);
        assert!(dt_consistency(&a) < 1e-10);

        let s0 = random_field(g, Rank::Scalar, &spec, 4).unwrap();
        let one = SpectralField::constant(g, 1.0);
        let heat = solve_variable_heat(&one, &one.scale(0.8), &s0, None, 0.2, 10, &ns).unwrap();
        let vec0 = SpectralField::stack(Rank::Vector, &[s0.clone(), SpectralField::zeros(g, Rank::Scalar)]).unwrap();
        let lame = solve_constant_lame(&vec0, None, 0.8, 0.0, 0.2, 10, &ns).unwrap();
        assert!(heat.solution.last().max_abs_diff(&lame.solution.last().component_field(0)) < 1e-10);
    }

    fn heat_error(steps: usize) -> f64 {
        // u* = cos(2t) sin(x1), a = 1 + 0.2 sin(x1), b = 1 + 0.2 cos(x1)
        let g = grid(16);
        let a = SpectralField::from_fn(g, Rank::Scalar, |x, _| 1.0 + 0.2 * x[0].sin());
        let b = SpectralField::from_fn(g, Rank::Scalar, |x, _| 1.0 + 0.2 * x[0].cos());
        let t = 0.5;
        let exact = |t: f64| SpectralField::from_fn(g, Rank::Scalar, move |x, _| Float::cos(2.0 * t) * x[0].sin());
        let f: Vec<SpectralField> = (0..=steps)
            .map(|k| {
                let tk = t * k as f64 / steps as f64;
                SpectralField::from_fn(g, Rank::Scalar, move |x, _| {
                    let (s, c) = (x[0].sin(), x[0].cos());
                    -2.0 * Float::sin(2.0 * tk) * s
                        + Float::cos(2.0 * tk) * (1.0 + 0.2 * s) * (s + 0.4 * s * c)
                })
            })
            .collect();
        let f = TimeSeriesField::uniform(t, f).unwrap();
        let r = solve_variable_heat(&a, &b, &exact(0.0), Some(&f), t, steps, &NormSpec::solution(2)).unwrap();
        r.solution.last().max_abs_diff(&exact(t))
    }

    #[test]
    fn heat_manufactured_solution_is_second_order() {
        let (e1, e2) = (heat_error(20), heat_error(40));
        let order = (e1 / e2).log2();
        assert!(order > 1.9, "order {order}, errors {e1} {e2}");
    }

    #[test]
    fn threshold_for_constant_coefficients_is_j_min() {
        let g = grid(32);
        let c = LameCoefficients::constant(g, 1.0, 0.5).unwrap();
        let t = select_threshold(&c, 0.1, 2.0, &Partition::default()).unwrap();
        assert_eq!(t.m, 0);
        assert_eq!(t.achieved_highfreq_norm, 0.0);
    }

    #[test]
    fn threshold_tail_decreases() {
        let g = grid(32);
        let rho = SpectralField::from_fn(g, Rank::Scalar, |x, _| 1.0 + 0.5 * x[0].sin());
        let one = SpectralField::constant(g, 1.0);
        let c = LameCoefficients::new(one.clone(), one.clone(), one, rho).unwrap();
        let t = select_threshold(&c, 0.05, 2.0, &Partition::default()).unwrap();
        for w in t.scan.windows(2) {
            assert!(w[1].2 <= w[0].2 + 1e-14);
        }
        assert!(t.achieved_lowfreq_inf >= c.alpha / 2.0);
    }

    #[test]
    fn ellipticity_is_checked() {
        let g = grid(8);
        let one = SpectralField::constant(g, 1.0);
        let neg = SpectralField::from_fn(g, Rank::Scalar, |x, _| x[0].sin());
        assert!(matches!(
            LameCoefficients::new(one.clone(), one.clone(), one, neg),
            Err(Error::NotElliptic(_))
        ));
    }

    #[test]
    fn cfl_violation_is_reported() {
        let g = grid(32);
        let rho = SpectralField::from_fn(g, Rank::Scalar, |x, _| 1.0 + 0.5 * x[0].sin());
        let one = SpectralField::constant(g, 1.0);
        let c = LameCoefficients::new(one.clone(), one.clone(), one, rho).unwrap();
        let u0 = SpectralField::zeros(g, Rank::Vector);
        let r = solve_variable_lame(&c, &u0, None, 1.0, 2, None, &NormSpec::solution(2));
        assert!(matches!(r, Err(Error::Cfl { .. })));
    }

    #[test]
    fn streaming_estimate_matches_stored_solve() {
        let g = grid(16);
        let spec = RandomFieldSpec { max_wavenumber: 4, ..RandomFieldSpec::default() };
        let u0 = random_field(g, Rank::Vector, &spec, 5).unwrap();
        let norms = NormSpec::solution(2);
        let full = solve_constant_lame(&u0, None, 0.7, 0.4, 0.3, 30, &norms).unwrap();
        let times: Vec<f64> = (0..=30).map(|k| 0.3 * k as f64 / 30.0).collect();
        let (sup, l1, first) = constant_lame_estimate(&u0, 0.7, 0.4, &times, &norms).unwrap();
        assert!((sup - full.sup_norm()).abs() < 1e-12 * sup);
        assert!((l1 - full.l1_norm()).abs() < 1e-10 * l1);
        assert!((first - full.initial_norm).abs() < 1e-14 * first);
    }

    #[test]
    fn graded_grid_layout() {
        let t = graded_times(1.0, 3, 4);
        assert_eq!(t.len(), 17);
        assert_eq!(t[0], 0.0);
        assert_eq!(t[4], 0.125);
        assert_eq!(t[16], 1.0);
        assert!(t.windows(2).all(|w| w[1] > w[0]));
    }
}
