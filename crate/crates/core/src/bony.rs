//! Paraproducts, remainders, commutators and the trial harnesses for the
//! product and commutator estimates.
//!
//! The mean is treated as a block below every dyadic block: `S_{j-1} f`
//! contains it and the remainder carries `mean(f) mean(g)`. With this
//! convention `T_f g + T_g f + R(f, g)` is exactly the dealiased product.

use alloc::format;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::littlewood_paley::{BesovParams, LittlewoodPaley, Partition};
use crate::random::{derive_seed, random_field, RandomFieldSpec};
use crate::report::InequalityReport;
use crate::spectral::{apply_multiplier, partial, Grid, MultiplierSymbol, Rank, SpectralField};

/// The three pieces of Bony's decomposition of `f g`.
pub struct BonyDecomposition {
    pub t_fg: SpectralField,
    pub t_gf: SpectralField,
    pub remainder: SpectralField,
}

fn product_rank(f: &SpectralField, g: &SpectralField) -> Result<()> {
    if f.rank() != Rank::Scalar && g.rank() != Rank::Scalar {
        return Err(Error::Mismatch("one Bony factor must be scalar".into()));
    }
    if !f.grid().same_shape(g.grid()) {
        return Err(Error::Mismatch("Bony factors on different grids".into()));
    }
    Ok(())
}

struct Blocks {
    mean: SpectralField,
    blocks: Vec<SpectralField>,
}

fn blocks(lp: &LittlewoodPaley, f: &SpectralField) -> Blocks {
    let fb = f.project();
    let mean_coeffs: Vec<f64> = (0..fb.components()).map(|c| fb.mean(c)).collect();
    let grid = *fb.grid();
    let mean = SpectralField::from_fn(grid, fb.rank(), |_, c| mean_coeffs[c]);
    let blocks = (lp.j_min()..=lp.j_max()).map(|j| lp.block(&fb, j)).collect();
    Blocks { mean, blocks }
}

/// Running low-frequency parts: entry `i` is `S_{j-1}` for block index `i`,
/// i.e. the mean plus blocks `0..i-1` (block indices relative to `j_min`).
fn lows(b: &Blocks) -> Vec<SpectralField> {
    let mut out = Vec::with_capacity(b.blocks.len());
    let mut acc = b.mean.clone();
    for i in 0..b.blocks.len() {
        out.push(acc.clone());
        if i >= 1 {
            acc = acc.add(&b.blocks[i - 1]);
        }
    }
    out
}

fn para(low_f: &[SpectralField], g: &Blocks, zero: &SpectralField) -> SpectralField {
    let mut acc = zero.clone();
    for (lf, gj) in low_f.iter().zip(&g.blocks) {
        acc = acc.add(&lf.mul(gj));
    }
    acc.project()
}

fn zero_for(f: &SpectralField, g: &SpectralField) -> SpectralField {
    let rank = if f.rank() == Rank::Scalar { g.rank() } else { f.rank() };
    SpectralField::zeros(*f.grid(), rank)
}

/// Computes `T_f g`, `T_g f` and `R(f, g)` in one pass.
pub fn bony_decomposition(f: &SpectralField, g: &SpectralField, partition: &Partition) -> Result<BonyDecomposition> {
    product_rank(f, g)?;
    let lp = LittlewoodPaley::new(*f.grid(), *partition);
    let bf = blocks(&lp, f);
    let bg = blocks(&lp, g);
    let zero = zero_for(f, g);
    let t_fg = para(&lows(&bf), &bg, &zero);
    let t_gf = para(&lows(&bg), &bf, &zero);
    let mut rem = bf.mean.mul(&bg.mean);
    let nb = bf.blocks.len();
    for i in 0..nb {
        for j in i.saturating_sub(1)..(i + 2).min(nb) {
            rem = rem.add(&bf.blocks[i].mul(&bg.blocks[j]));
        }
    }
    Ok(BonyDecomposition {
        t_fg,
        t_gf,
        remainder: rem.project(),
    })
}

/// `T_f g = sum_j S_{j-1} f Delta_j g`.
pub fn paraproduct(f: &SpectralField, g: &SpectralField, partition: &Partition) -> Result<SpectralField> {
    product_rank(f, g)?;
    let lp = LittlewoodPaley::new(*f.grid(), *partition);
    let bf = blocks(&lp, f);
    let bg = blocks(&lp, g);
    Ok(para(&lows(&bf), &bg, &zero_for(f, g)))
}

/// `R(f, g) = sum_{|j - j'| <= 1} Delta_j f Delta_j' g + mean(f) mean(g)`.
pub fn remainder(f: &SpectralField, g: &SpectralField, partition: &Partition) -> Result<SpectralField> {
    Ok(bony_decomposition(f, g, partition)?.remainder)
}

/// `T'_u v = T_u v + R(u, v)`.
pub fn t_prime(u: &SpectralField, v: &SpectralField, partition: &Partition) -> Result<SpectralField> {
    let b = bony_decomposition(u, v, partition)?;
    Ok(b.t_fg.add(&b.remainder))
}

/// `[a, Delta_j] w = a Delta_j w - Delta_j (a w)` with dealiased products.
pub fn block_commutator(lp: &LittlewoodPaley, a: &SpectralField, j: i32, w: &SpectralField) -> Result<SpectralField> {
    if a.rank() != Rank::Scalar {
        return Err(Error::Mismatch("commutator coefficient must be scalar".into()));
    }
    let left = a.product_dealiased(&lp.block(w, j));
    let right = lp.block(&a.product_dealiased(w), j);
    Ok(left.sub(&right))
}

/// `[A(D), q] w = A(D)(q w) - q A(D) w` for a degree-0 multiplier.
pub fn multiplier_commutator(symbol: &MultiplierSymbol, q: &SpectralField, w: &SpectralField) -> Result<SpectralField> {
    if symbol.degree != 0.0 {
        return Err(Error::InvalidParameter(format!(
            "commutator needs a degree-0 symbol, `{}` has degree {}",
            symbol.name, symbol.degree
        )));
    }
    if q.rank() != Rank::Scalar {
        return Err(Error::Mismatch("commutator coefficient must be scalar".into()));
    }
    let left = apply_multiplier(symbol, &q.product_dealiased(w))?;
    let right = q.product_dealiased(&apply_multiplier(symbol, w)?);
    Ok(left.sub(&right))
}

/// Trial configuration shared by the harnesses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarnessConfig {
    pub grid: Grid,
    pub partition: Partition,
    pub trials: usize,
    pub seed: u64,
    pub spec: RandomFieldSpec,
}

/// Parameter point `(sigma, nu, p)` of a product or commutator estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaPoint {
    pub sigma: f64,
    pub nu: f64,
    pub p: f64,
}

fn lower_sigma(dim: usize, p: f64) -> f64 {
    let b = BesovParams { s: 0.0, p };
    let n = dim as f64;
    -(n / p).min(n / b.conjugate())
}

/// Product law window: `nu >= 0`, `-min(n/p, n/p') < sigma <= n/p - nu`.
pub fn product_window(dim: usize, pt: &LemmaPoint) -> Result<()> {
    let n = dim as f64;
    if pt.nu >= 0.0 && pt.sigma > lower_sigma(dim, pt.p) && pt.sigma <= n / pt.p - pt.nu + 1e-14 {
        Ok(())
    } else {
        Err(Error::Hypothesis(format!("product law at {pt:?}")))
    }
}

/// Block commutator window: `0 <= nu <= n/p`,
/// `-min(n/p, n/p') - 1 < sigma <= n/p - nu`.
pub fn commutator_window(dim: usize, pt: &LemmaPoint) -> Result<()> {
    let n = dim as f64;
    if pt.nu >= 0.0
        && pt.nu <= n / pt.p + 1e-14
        && pt.sigma > lower_sigma(dim, pt.p) - 1.0
        && pt.sigma <= n / pt.p - pt.nu + 1e-14
    {
        Ok(())
    } else {
        Err(Error::Hypothesis(format!("commutator estimate at {pt:?}")))
    }
}

/// Multiplier commutator window: `nu >= 0`,
/// `-min(n/p, n/p') - 1 < sigma <= n/p - nu`.
pub fn multiplier_commutator_window(dim: usize, pt: &LemmaPoint) -> Result<()> {
    let n = dim as f64;
    if pt.nu >= 0.0 && pt.sigma > lower_sigma(dim, pt.p) - 1.0 && pt.sigma <= n / pt.p - pt.nu + 1e-14 {
        Ok(())
    } else {
        Err(Error::Hypothesis(format!("multiplier commutator estimate at {pt:?}")))
    }
}

fn trial_field(cfg: &HarnessConfig, rank: Rank, trial: usize, slot: u64) -> Result<SpectralField> {
    random_field(cfg.grid, rank, &cfg.spec, derive_seed(cfg.seed, 4 * trial as u64 + slot))
}

fn point_report(id: &str, pt: &LemmaPoint, cfg: &HarnessConfig) -> InequalityReport {
    InequalityReport::new(id)
        .with_param("sigma", pt.sigma)
        .with_param("nu", pt.nu)
        .with_param("p", pt.p)
        .with_param("N", cfg.grid.n() as f64)
}

/// `||f g||_{B^sigma} <= C ||f||_{B^{n/p - nu}} ||g||_{B^{sigma + nu}}`.
pub fn product_law_check(cfg: &HarnessConfig, points: &[LemmaPoint]) -> Result<Vec<InequalityReport>> {
    let n = cfg.grid.dim() as f64;
    let lp = LittlewoodPaley::new(cfg.grid, cfg.partition);
    for pt in points {
        product_window(cfg.grid.dim(), pt)?;
    }
    let mut reports: Vec<_> = points.iter().map(|pt| point_report("product", pt, cfg)).collect();
    for t in 0..cfg.trials {
        let f = trial_field(cfg, Rank::Scalar, t, 0)?;
        let g = trial_field(cfg, Rank::Scalar, t, 1)?;
        let fg = f.product_dealiased(&g);
        for (pt, rep) in points.iter().zip(reports.iter_mut()) {
            let b = |s: f64, x: &SpectralField| lp.besov(x, &BesovParams { s, p: pt.p });
            let lhs = b(pt.sigma, &fg);
            let rhs = b(n / pt.p - pt.nu, &f) * b(pt.sigma + pt.nu, &g);
            rep.record(t, lhs, rhs);
        }
    }
    Ok(reports)
}

/// `sum_j 2^{j sigma} ||d_k [a, Delta_j] w||_{L^p}
///  <= C ||nabla a||_{B^{n/p - nu}} ||w||_{B^{sigma + nu}}`, maximized over `k`.
pub fn commutator_check(cfg: &HarnessConfig, points: &[LemmaPoint]) -> Result<Vec<InequalityReport>> {
    let d = cfg.grid.dim();
    let n = d as f64;
    let lp = LittlewoodPaley::new(cfg.grid, cfg.partition);
    for pt in points {
        commutator_window(d, pt)?;
    }
    let mut reports: Vec<_> = points
        .iter()
        .map(|pt| {
            let mut r = point_report("commutator", pt, cfg);
            if pt.p > n {
                r.flag("p > n regime");
            }
            r
        })
        .collect();
    for t in 0..cfg.trials {
        let a = trial_field(cfg, Rank::Scalar, t, 0)?;
        let w = trial_field(cfg, Rank::Scalar, t, 1)?;
        let grad_a = crate::spectral::gradient(&a);
        // ||d_k [a, Delta_j] w||_{L^p} for every block and direction
        let mut table: Vec<Vec<Vec<f64>>> = Vec::new();
        for j in lp.j_min()..=lp.j_max() {
            let c = block_commutator(&lp, &a, j, &w)?;
            let per_k: Vec<Vec<f64>> = (0..d)
                .map(|k| {
                    let dk = partial(&c, k);
                    points.iter().map(|pt| dk.lp_norm(pt.p)).collect()
                })
                .collect();
            table.push(per_k);
        }
        for (pi, (pt, rep)) in points.iter().zip(reports.iter_mut()).enumerate() {
            let lhs = (0..d)
                .map(|k| {
                    table
                        .iter()
                        .enumerate()
                        .map(|(i, per_k)| 2f64.powf((lp.j_min() + i as i32) as f64 * pt.sigma) * per_k[k][pi])
                        .sum::<f64>()
                })
                .fold(0.0, f64::max);
            let rhs = lp.besov(&grad_a, &BesovParams { s: n / pt.p - pt.nu, p: pt.p })
                * lp.besov(&w, &BesovParams { s: pt.sigma + pt.nu, p: pt.p });
            rep.record(t, lhs, rhs);
        }
    }
    Ok(reports)
}

/// `||[A(D), q] w||_{B^{sigma+1}} <= C ||q||_{B^{1 - nu + n/p}} ||w||_{B^{sigma + nu}}`.
pub fn multiplier_commutator_check(
    cfg: &HarnessConfig,
    symbol: &MultiplierSymbol,
    points: &[LemmaPoint],
) -> Result<Vec<InequalityReport>> {
    let d = cfg.grid.dim();
    let n = d as f64;
    let lp = LittlewoodPaley::new(cfg.grid, cfg.partition);
    for pt in points {
        multiplier_commutator_window(d, pt)?;
    }
    let w_rank = symbol.input_rank().unwrap_or(Rank::Scalar);
    let mut reports: Vec<_> = points
        .iter()
        .map(|pt| point_report(&format!("multiplier-commutator {}", symbol.name), pt, cfg))
        .collect();
    for t in 0..cfg.trials {
        let q = trial_field(cfg, Rank::Scalar, t, 0)?;
        let w = trial_field(cfg, w_rank, t, 1)?;
        let c = multiplier_commutator(symbol, &q, &w)?;
        for (pt, rep) in points.iter().zip(reports.iter_mut()) {
            let b = |s: f64, x: &SpectralField| lp.besov(x, &BesovParams { s, p: pt.p });
            let lhs = b(pt.sigma + 1.0, &c);
            let rhs = b(1.0 - pt.nu + n / pt.p, &q) * b(pt.sigma + pt.nu, &w);
            rep.record(t, lhs, rhs);
        }
    }
    Ok(reports)
}

/// `||u||_{B^{s+1}} <= ||u||_{B^s}^{1/2} ||u||_{B^{s+2}}^{1/2}` (constant 1).
pub fn interpolation_check(cfg: &HarnessConfig, s: f64, p: f64) -> Result<InequalityReport> {
    let lp = LittlewoodPaley::new(cfg.grid, cfg.partition);
    let mut rep = InequalityReport::new("interpolation")
        .with_param("s", s)
        .with_param("p", p)
        .with_bound(1.0);
    for t in 0..cfg.trials {
        let u = trial_field(cfg, Rank::Vector, t, 0)?;
        let b = |s: f64| lp.besov(&u, &BesovParams { s, p });
        rep.record(t, b(s + 1.0), (b(s) * b(s + 2.0)).sqrt());
    }
    Ok(rep)
}
