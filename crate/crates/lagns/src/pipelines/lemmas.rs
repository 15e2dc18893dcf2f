//! Harmonic-analysis checks: Littlewood-Paley soundness and the product and
//! commutator estimates on seeded random trials.

use lagns_core::bony::{
    bony_decomposition, commutator_check, interpolation_check, multiplier_commutator_check, product_law_check,
    HarnessConfig, LemmaPoint,
};
use lagns_core::littlewood_paley::LittlewoodPaley;
use lagns_core::random::{derive_seed, random_field, RandomFieldSpec};
use lagns_core::report::InequalityReport;
use lagns_core::spectral::MultiplierSymbol;
use lagns_core::{Grid, Partition, Rank};
use rayon::prelude::*;
use serde::Serialize;

use super::spread;
use crate::config::{LemmaHarness, Point, Scenario, Soundness};
use crate::report::{Gate, ReportBundle};

pub fn run(sc: &Scenario, b: &mut ReportBundle) -> anyhow::Result<()> {
    let cfg = sc.lemmas.clone().unwrap_or_default();
    let grid = sc.grid.grid()?;
    let partition = sc.problem.partition()?;
    if let Some(s) = &cfg.soundness {
        soundness(grid, partition, s, sc.seed, b);
    }
    if let Some(h) = &cfg.harness {
        harness(sc, partition, h, b)?;
    }
    Ok(())
}

fn soundness(grid: Grid, partition: Partition, s: &Soundness, seed: u64, b: &mut ReportBundle) {
    let lp = LittlewoodPaley::new(grid, partition);
    let spec = RandomFieldSpec {
        max_wavenumber: s.max_wavenumber,
        slope: s.slope,
        amplitude: 1.0,
    };
    // stream 0: reconstruction, 1: Bony pairs, 2: interpolation
    let recon: lagns_core::Result<Vec<f64>> = (0..s.fields)
        .into_par_iter()
        .map(|i| {
            let f = random_field(grid, Rank::Scalar, &spec, derive_seed(derive_seed(seed, 0), i as u64))?;
            // constant offset exercises the low-frequency cutoff
            let f = f.shift(0.5);
            let mut acc = lp.low(&f, lp.j_min());
            for j in lp.j_min()..=lp.j_max() {
                acc = acc.add(&lp.block(&f, j));
            }
            Ok(acc.max_abs_diff(&f) / f.max_abs())
        })
        .collect();
    match recon {
        Ok(v) => b.gate(Gate::at_most(
            "partition of unity",
            v.iter().copied().fold(0.0, f64::max),
            s.partition_tol,
            format!("relative reconstruction error over {} fields", v.len()),
        )),
        Err(e) => b.gate(Gate::error("partition of unity", &e)),
    }

    let bony: lagns_core::Result<Vec<f64>> = (0..s.bony_pairs)
        .into_par_iter()
        .map(|i| {
            let base = derive_seed(derive_seed(seed, 1), i as u64);
            let f = random_field(grid, Rank::Scalar, &spec, derive_seed(base, 0))?.shift(0.3);
            let g = random_field(grid, Rank::Vector, &spec, derive_seed(base, 1))?;
            let d = bony_decomposition(&f, &g, &partition)?;
            let prod = f.product_dealiased(&g);
            Ok(d.t_fg.add(&d.t_gf).add(&d.remainder).max_abs_diff(&prod) / prod.max_abs())
        })
        .collect();
    match bony {
        Ok(v) => b.gate(Gate::at_most(
            "bony identity",
            v.iter().copied().fold(0.0, f64::max),
            s.bony_tol,
            format!("relative |T_f g + T_g f + R(f, g) - f g| over {} pairs", v.len()),
        )),
        Err(e) => b.gate(Gate::error("bony identity", &e)),
    }

    let cfg = HarnessConfig {
        grid,
        partition,
        trials: s.interpolation_fields,
        seed: derive_seed(seed, 2),
        spec,
    };
    let reports: lagns_core::Result<Vec<InequalityReport>> = s
        .interpolation_s
        .par_iter()
        .map(|&sv| interpolation_check(&cfg, sv, 2.0))
        .collect();
    match reports {
        Ok(r) => {
            let excess = r.iter().map(|x| x.fitted_constant - 1.0).fold(f64::NEG_INFINITY, f64::max);
            b.gate(Gate::at_most(
                "interpolation inequality",
                excess.max(0.0),
                s.interpolation_tol,
                format!(
                    "largest relative violation of |u|_(s+1) <= |u|_s^(1/2) |u|_(s+2)^(1/2) over {} fields at {} values of s",
                    s.interpolation_fields,
                    r.len()
                ),
            ));
            b.section("interpolation", &r);
        }
        Err(e) => b.gate(Gate::error("interpolation inequality", &e)),
    }
}

fn points(p: &[Point]) -> Vec<LemmaPoint> {
    p.iter().map(|&[sigma, nu, p]| LemmaPoint { sigma, nu, p }).collect()
}

#[derive(Serialize)]
struct Drift {
    estimate: String,
    point: [f64; 3],
    constants: Vec<f64>,
    drift: f64,
}

fn harness(sc: &Scenario, partition: Partition, h: &LemmaHarness, b: &mut ReportBundle) -> anyhow::Result<()> {
    let spec = RandomFieldSpec {
        max_wavenumber: h.max_wavenumber,
        slope: h.slope,
        amplitude: 1.0,
    };
    let symbol = MultiplierSymbol::abs_divergence();
    let families: [(&str, Vec<LemmaPoint>); 3] = [
        ("product", points(&h.product)),
        ("commutator", points(&h.commutator)),
        ("multiplier commutator", points(&h.multiplier_commutator)),
    ];
    // (family, resolution) jobs; every resolution shares the seed so the
    // trial fields agree up to the grid
    let mut jobs = Vec::new();
    for (fi, _) in families.iter().enumerate() {
        for &n in &h.resolutions {
            jobs.push((fi, n));
        }
    }
    let results: Vec<lagns_core::Result<Vec<InequalityReport>>> = jobs
        .par_iter()
        .map(|&(fi, n)| {
            let cfg = HarnessConfig {
                grid: sc.grid.with_n(n).grid()?,
                partition,
                trials: h.trials,
                seed: sc.seed,
                spec,
            };
            let pts = &families[fi].1;
            match fi {
                0 => product_law_check(&cfg, pts),
                1 => commutator_check(&cfg, pts),
                _ => multiplier_commutator_check(&cfg, &symbol, pts),
            }
        })
        .collect();
    let mut by_family: Vec<Vec<Vec<InequalityReport>>> = vec![Vec::new(); families.len()];
    for ((fi, _), r) in jobs.iter().zip(results) {
        match r {
            Ok(reps) => by_family[*fi].push(reps),
            Err(e) => {
                b.gate(Gate::error(&format!("{} estimate", families[*fi].0), &e));
            }
        }
    }
    let mut drifts = Vec::new();
    for (fi, (name, pts)) in families.iter().enumerate() {
        let per_res = &by_family[fi];
        if per_res.len() != h.resolutions.len() {
            continue;
        }
        let all: Vec<&InequalityReport> = per_res.iter().flatten().collect();
        let holds = all.iter().all(|r| r.holds());
        b.gate(Gate::check(
            &format!("{name} estimate"),
            holds,
            format!(
                "{} points x {} resolutions, {} trials each; finite fitted constants",
                pts.len(),
                h.resolutions.len(),
                h.trials
            ),
        ));
        let mut worst = 1.0f64;
        for (pi, pt) in pts.iter().enumerate() {
            let constants: Vec<f64> = per_res.iter().map(|reps| reps[pi].fitted_constant).collect();
            let d = spread(&constants);
            worst = worst.max(d);
            drifts.push(Drift {
                estimate: name.to_string(),
                point: [pt.sigma, pt.nu, pt.p],
                constants,
                drift: d,
            });
        }
        b.gate(Gate::at_most(
            &format!("{name} constant drift"),
            worst,
            h.max_drift,
            format!("max/min fitted constant across N = {:?}", h.resolutions),
        ));
        b.section(&format!("{name} reports"), per_res);
    }
    b.section("constant drift", &drifts);
    Ok(())
}
