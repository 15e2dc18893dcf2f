//! Linear solver checks: exact constant-coefficient modes, universality of
//! the fitted estimate constant, manufactured variable-coefficient heat.

use lagns_core::lame::{constant_lame_estimate, graded_times, solve_constant_lame, solve_variable_heat, NormSpec};
use lagns_core::random::{derive_seed, random_field, RandomFieldSpec};
use lagns_core::{BesovParams, Grid, Rank, SpectralField, TimeSeriesField};
use rayon::prelude::*;
use serde::Serialize;

use super::spread;
use crate::config::{ExactModes, Manufactured, Scenario, Universality};
use crate::report::{Gate, ReportBundle};
use crate::table::ConvergenceTable;

pub fn run(sc: &Scenario, b: &mut ReportBundle) -> anyhow::Result<()> {
    let cfg = sc.lame.clone().unwrap_or_default();
    let grid = sc.grid.grid()?;
    let norms = NormSpec {
        params: BesovParams::solution(grid.dim(), sc.problem.p)?,
        partition: sc.problem.partition()?,
    };
    if let Some(e) = &cfg.exact {
        exact(grid, e, &norms, b);
    }
    if let Some(u) = &cfg.universality {
        universality(grid, u, &norms, sc.seed, b);
    }
    if let Some(m) = &cfg.manufactured {
        let eps = sc.problem.density_amplitude.unwrap_or(0.2);
        manufactured(grid, eps, m, b);
    }
    Ok(())
}

/// Unit gradient and solenoidal modes `e cos(xi.x)` along wavevector `k`.
fn modes(grid: Grid, k: &[i64]) -> Option<(SpectralField, SpectralField, f64)> {
    let d = grid.dim();
    if k.len() != d || k.iter().all(|&x| x == 0) {
        return None;
    }
    let c = grid.frequency_scale();
    let xi: Vec<f64> = k.iter().map(|&x| x as f64 * c).collect();
    let norm = xi.iter().map(|x| x * x).sum::<f64>().sqrt();
    let e: Vec<f64> = xi.iter().map(|x| x / norm).collect();
    let perp: Vec<f64> = match d {
        1 => return None,
        2 => vec![-e[1], e[0]],
        _ => {
            // e x a for the axis least aligned with e
            let axis = (0..3).min_by(|&i, &j| e[i].abs().total_cmp(&e[j].abs())).expect("three axes");
            let mut a = [0.0; 3];
            a[axis] = 1.0;
            let v = [e[1] * a[2] - e[2] * a[1], e[2] * a[0] - e[0] * a[2], e[0] * a[1] - e[1] * a[0]];
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter().map(|x| x / n).collect()
        }
    };
    let phase = |x: &[f64; 3]| (0..d).map(|i| xi[i] * x[i]).sum::<f64>().cos();
    let grad = SpectralField::from_fn(grid, Rank::Vector, |x, i| e[i] * phase(x));
    let sol = SpectralField::from_fn(grid, Rank::Vector, |x, i| perp[i] * phase(x));
    Some((grad, sol, norm * norm))
}

#[derive(Serialize)]
struct ModeRow {
    mu: f64,
    mu_prime: f64,
    k: Vec<i64>,
    gradient_error: f64,
    solenoidal_error: f64,
}

/// Largest deviation from `exp(-rate t)` decay over all samples.
fn decay_error(u0: &SpectralField, rate: f64, mu: f64, mup: f64, horizon: f64, steps: usize, norms: &NormSpec) -> f64 {
    match solve_constant_lame(u0, None, mu, mup, horizon, steps, norms) {
        Ok(r) => r
            .solution
            .times()
            .iter()
            .zip(r.solution.samples())
            .map(|(&t, u)| u.max_abs_diff(&u0.scale((-rate * t).exp())))
            .fold(0.0, f64::max),
        Err(_) => f64::INFINITY,
    }
}

/// Largest exact-mode error over the configured viscosities and wavevectors.
pub fn exact_mode_error(grid: Grid, e: &ExactModes, steps: usize, norms: &NormSpec) -> f64 {
    exact_rows(grid, e, steps, norms)
        .iter()
        .map(|r| r.gradient_error.max(r.solenoidal_error))
        .fold(0.0, f64::max)
}

fn exact_rows(grid: Grid, e: &ExactModes, steps: usize, norms: &NormSpec) -> Vec<ModeRow> {
    let mut cases = Vec::new();
    for &mu in &e.mu {
        for &mup in &e.mu_prime {
            for k in &e.wavevectors {
                cases.push((mu, mup, k.clone()));
            }
        }
    }
    cases
        .into_par_iter()
        .map(|(mu, mu_prime, k)| {
            let (gradient_error, solenoidal_error) = match modes(grid, &k) {
                Some((g, s, k2)) => (
                    decay_error(&g, (mu + mu_prime) * k2, mu, mu_prime, e.horizon, steps, norms),
                    decay_error(&s, mu * k2, mu, mu_prime, e.horizon, steps, norms),
                ),
                None => (f64::INFINITY, f64::INFINITY),
            };
            ModeRow {
                mu,
                mu_prime,
                k,
                gradient_error,
                solenoidal_error,
            }
        })
        .collect()
}

fn exact(grid: Grid, e: &ExactModes, norms: &NormSpec, b: &mut ReportBundle) {
    let rows = exact_rows(grid, e, e.steps, norms);
    let worst = rows
        .iter()
        .map(|r| r.gradient_error.max(r.solenoidal_error))
        .fold(0.0, f64::max);
    b.gate(Gate::at_most(
        "exact mode decay",
        worst,
        e.tol,
        format!("{} gradient/solenoidal mode pairs against exp(-(mu+mu')k^2 t), exp(-mu k^2 t)", rows.len()),
    ));
    b.section("exact modes", &rows);
    let levels = [[grid.n(), e.steps], [grid.n(), 2 * e.steps]];
    let errs = [worst, exact_mode_error(grid, e, 2 * e.steps, norms)];
    match ConvergenceTable::new("exact mode error", &levels, &errs) {
        Ok(t) => {
            b.gate(Gate::check(
                "exact mode order column",
                t.orders().iter().all(|o| o.is_exact()),
                "step refinement of an exact integrator",
            ));
            b.section("exact mode table", t.to_markdown());
        }
        Err(err) => b.gate(Gate::error("exact mode order column", &err)),
    }
}

/// Random members plus, per dyadic scale, a potential `sin(k x1) e1` and a
/// solenoidal `sin(k x2) e1` member.
fn ensemble(grid: Grid, u: &Universality, seed: u64) -> lagns_core::Result<Vec<(String, SpectralField)>> {
    let mut out = Vec::new();
    for i in 0..u.random_members {
        let f = random_field(grid, Rank::Vector, &RandomFieldSpec::default(), derive_seed(seed, i as u64))?;
        out.push((format!("random {i}"), f));
    }
    if u.block_members && grid.dim() >= 2 {
        let mut k = 1i64;
        while k <= grid.dealias_cutoff() {
            let kf = k as f64 * grid.frequency_scale();
            out.push((
                format!("potential k={k}"),
                SpectralField::from_fn(grid, Rank::Vector, |x, c| if c == 0 { (kf * x[0]).sin() } else { 0.0 }),
            ));
            out.push((
                format!("solenoidal k={k}"),
                SpectralField::from_fn(grid, Rank::Vector, |x, c| if c == 0 { (kf * x[1]).sin() } else { 0.0 }),
            ));
            k *= 2;
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct FitRow {
    mu: f64,
    mu_prime: f64,
    horizon: f64,
    constant: f64,
    worst_member: String,
}

fn universality(grid: Grid, u: &Universality, norms: &NormSpec, seed: u64, b: &mut ReportBundle) {
    let members = match ensemble(grid, u, seed) {
        Ok(m) => m,
        Err(e) => return b.gate(Gate::error("estimate universality", &e)),
    };
    let mut cases = Vec::new();
    for &mu in &u.mu {
        for &mup in &u.mu_prime {
            for &t in &u.horizons {
                cases.push((mu, mup, t));
            }
        }
    }
    let rows: Vec<lagns_core::Result<FitRow>> = cases
        .into_par_iter()
        .map(|(mu, mu_prime, horizon)| {
            let times = graded_times(horizon, u.time_levels, u.steps_per_level);
            let kappa = mu.min(mu + mu_prime);
            let mut best = (0.0f64, String::new());
            for (name, u0) in &members {
                let (sup, hess, first) = constant_lame_estimate(u0, mu, mu_prime, &times, norms)?;
                let c = (sup + kappa * hess) / first;
                if c > best.0 {
                    best = (c, name.clone());
                }
            }
            Ok(FitRow {
                mu,
                mu_prime,
                horizon,
                constant: best.0,
                worst_member: best.1,
            })
        })
        .collect();
    let rows: Vec<FitRow> = match rows.into_iter().collect() {
        Ok(r) => r,
        Err(e) => return b.gate(Gate::error("estimate universality", &e)),
    };
    let constants: Vec<f64> = rows.iter().map(|r| r.constant).collect();
    b.gate(Gate::at_most(
        "estimate universality",
        spread(&constants),
        u.max_spread,
        format!(
            "max/min of the fitted constant over {} (mu, mu', T) combinations, {} data members",
            rows.len(),
            members.len()
        ),
    ));
    b.section("estimate constants", &rows);
}

/// Error at `T` of the heat solve `d_t u - a d1(b d1 u) = f` with
/// `a = 1 + eps sin x1`, `b = 1 + eps cos x1`, exact `u = cos(2t) sin x1`.
pub fn manufactured_heat_error(grid: Grid, eps: f64, horizon: f64, steps: usize) -> lagns_core::Result<f64> {
    let a = SpectralField::from_fn(grid, Rank::Scalar, |x, _| 1.0 + eps * x[0].sin());
    let bb = SpectralField::from_fn(grid, Rank::Scalar, |x, _| 1.0 + eps * x[0].cos());
    let exact = |t: f64| SpectralField::from_fn(grid, Rank::Scalar, move |x, _| (2.0 * t).cos() * x[0].sin());
    let f: Vec<SpectralField> = (0..=steps)
        .map(|k| {
            let t = horizon * k as f64 / steps as f64;
            SpectralField::from_fn(grid, Rank::Scalar, move |x, _| {
                let (s, c) = (x[0].sin(), x[0].cos());
                -2.0 * (2.0 * t).sin() * s + (2.0 * t).cos() * (1.0 + eps * s) * (s + 2.0 * eps * s * c)
            })
        })
        .collect();
    let f = TimeSeriesField::uniform(horizon, f)?;
    let r = solve_variable_heat(&a, &bb, &exact(0.0), Some(&f), horizon, steps, &NormSpec::solution(grid.dim()))?;
    Ok(r.solution.last().max_abs_diff(&exact(horizon)))
}

fn manufactured(grid: Grid, eps: f64, m: &Manufactured, b: &mut ReportBundle) {
    let errs: lagns_core::Result<Vec<f64>> = m
        .steps
        .par_iter()
        .map(|&s| manufactured_heat_error(grid, eps, m.horizon, s))
        .collect();
    let levels: Vec<[usize; 2]> = m.steps.iter().map(|&s| [grid.n(), s]).collect();
    let table = errs
        .map_err(anyhow::Error::from)
        .and_then(|e| Ok(ConvergenceTable::new("max error at T", &levels, &e)?));
    match table {
        Ok(t) => {
            let worst = t
                .orders()
                .iter()
                .map(|o| o.value().unwrap_or(f64::INFINITY))
                .fold(f64::INFINITY, f64::min);
            b.gate(Gate::at_least(
                "manufactured heat order",
                worst,
                m.min_order,
                "smallest observed order under step doubling",
            ));
            b.section("manufactured heat table", t.to_markdown());
            b.section("manufactured heat", &t);
        }
        Err(e) => b.gate(Gate::error("manufactured heat order", &e)),
    }
}
