//! Flow-map checks: the algebra of `adj`, `A`, `J` and the fitted
//! constants of the flow estimates.

use lagns_core::lagrangian::{
    adjugate_expansion, flow_amplitude_sweep, flow_difference_check, flow_estimate_check, integrate_flow,
    jacobian_integral_form, FlowMap,
};
use lagns_core::quadrature::observed_orders;
use lagns_core::random::{derive_seed, random_field, RandomFieldSpec};
use lagns_core::report::InequalityReport;
use lagns_core::spectral::jacobian;
use lagns_core::{Grid, Partition, Rank, SpectralField, TimeSeriesField};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{FlowAlgebra, FlowEstimates, Scenario};
use crate::report::{Gate, ReportBundle};

pub fn run(sc: &Scenario, b: &mut ReportBundle) -> anyhow::Result<()> {
    let cfg = sc.flow.clone().unwrap_or_default();
    let grid = sc.grid.grid()?;
    let partition = sc.problem.partition()?;
    if let Some(a) = &cfg.algebra {
        algebra(sc, grid, partition, a, b)?;
    }
    if let Some(e) = &cfg.estimates {
        estimates(grid, partition, sc.problem.p, e, sc.seed, b);
    }
    Ok(())
}

fn spec(grid: &Grid) -> RandomFieldSpec {
    RandomFieldSpec {
        max_wavenumber: grid.dealias_cutoff().min(4),
        ..RandomFieldSpec::default()
    }
}

/// Random vector field with pointwise `|Dv| <= size`.
fn sized_field(grid: Grid, size: f64, seed: u64) -> lagns_core::Result<SpectralField> {
    let d = random_field(grid, Rank::Vector, &spec(&grid), seed)?;
    Ok(d.scale(size / jacobian(&d).max_abs()))
}

fn unit_flow(grid: Grid, strain: f64, seed: u64) -> lagns_core::Result<FlowMap> {
    let d = sized_field(grid, strain, seed)?;
    FlowMap::from_displacements(vec![0.0, 1.0], vec![SpectralField::zeros(grid, Rank::Vector), d])
}

/// `v(t) = (1 + t / T) v0` sampled on `steps + 1` points.
fn ramp(v0: &SpectralField, horizon: f64, steps: usize) -> lagns_core::Result<TimeSeriesField> {
    let samples = (0..=steps).map(|k| v0.scale(1.0 + k as f64 / steps as f64)).collect();
    TimeSeriesField::uniform(horizon, samples)
}

#[derive(Serialize)]
struct AlgebraTrial {
    dim: usize,
    expansion: f64,
    adjugate_vs_j_a: f64,
}

fn algebra(sc: &Scenario, grid: Grid, partition: Partition, a: &FlowAlgebra, b: &mut ReportBundle) -> anyhow::Result<()> {
    let grid3 = sc.grid.with_n(a.n3).grid().and_then(|g| Grid::new(3, g.n(), g.length()))?;
    let jobs: Vec<(Grid, u64)> = (0..a.trials)
        .flat_map(|t| [(grid, t as u64), (grid3, t as u64)])
        .collect();
    let trials: lagns_core::Result<Vec<AlgebraTrial>> = jobs
        .par_iter()
        .map(|&(g, t)| {
            let flow = unit_flow(g, a.strain, derive_seed(sc.seed, t))?;
            let s = flow.snapshot(1);
            Ok(AlgebraTrial {
                dim: g.dim(),
                expansion: adjugate_expansion(s.strain).adjugate.max_abs_diff(s.adjugate),
                adjugate_vs_j_a: s.adjugate.max_abs_diff(&s.jacobian.mul(s.inverse)),
            })
        })
        .collect();
    match trials {
        Ok(t) => {
            let worst = |f: &dyn Fn(&AlgebraTrial) -> f64, dim: Option<usize>| {
                t.iter()
                    .filter(|x| dim.is_none_or(|d| x.dim == d))
                    .map(f)
                    .fold(0.0, f64::max)
            };
            b.gate(Gate::at_most(
                "adjugate expansion exact in 2d",
                worst(&|x| x.expansion, Some(2)),
                a.expansion_tol,
                format!("|adj(Id + C) - (Id - (C - tr C Id))| over {} flows", a.trials),
            ));
            b.gate(Gate::at_most(
                "adjugate equals J times inverse",
                worst(&|x| x.adjugate_vs_j_a, None),
                a.identity_tol,
                format!("{} flows each in 2d and 3d", a.trials),
            ));
            b.section("algebra trials", &t);
        }
        Err(e) => b.gate(Gate::error("adjugate equals J times inverse", &e)),
    }

    // quadratic term of the 3d expansion
    let p3 = sweep_3d(grid3, partition, a, sc.seed);
    match p3 {
        Ok((slope, values)) => {
            b.gate(Gate::at_most(
                "quadratic adjugate term slope in 3d",
                (slope - 2.0).abs(),
                a.slope_tol,
                format!("log-log slope {slope:.4} of |P2(C)| against amplitude"),
            ));
            b.section("quadratic adjugate sweep", (&a.amplitudes, values));
        }
        Err(e) => b.gate(Gate::error("quadratic adjugate term slope in 3d", &e)),
    }

    // integral form of J against the determinant
    let errs: lagns_core::Result<Vec<f64>> = a.steps.par_iter().map(|&s| jacobian_form_error(grid, s)).collect();
    match errs {
        Ok(e) => {
            let orders = observed_orders(&e, 2.0);
            let worst = orders.iter().copied().fold(f64::INFINITY, f64::min);
            b.gate(Gate::at_least(
                "jacobian integral form order",
                worst,
                a.min_order,
                format!("errors {e:?} at steps {:?}", a.steps),
            ));
            b.section("jacobian integral form", (&a.steps, &e, &orders));
        }
        Err(e) => b.gate(Gate::error("jacobian integral form order", &e)),
    }
    Ok(())
}

fn sweep_3d(grid3: Grid, partition: Partition, a: &FlowAlgebra, seed: u64) -> lagns_core::Result<(f64, Vec<f64>)> {
    let v0 = sized_field(grid3, a.strain, derive_seed(seed, 1 << 20))?;
    let v = ramp(&v0, 1.0, 4)?;
    let sweep = flow_amplitude_sweep(&v, &v, &a.amplitudes, 2.0, &partition)?;
    let values = sweep
        .series
        .iter()
        .find(|s| s.0 == "P2")
        .map(|s| s.1.clone())
        .unwrap_or_default();
    Ok((sweep.slope("P2").unwrap_or(f64::NAN), values))
}

/// `J` from the integral of `div v` along the flow against `det DX` at the
/// final time, for a smooth time-dependent velocity on `[0, 1]`.
fn jacobian_form_error(grid: Grid, steps: usize) -> lagns_core::Result<f64> {
    let samples = (0..=steps)
        .map(|k| {
            let t = k as f64 / steps as f64;
            SpectralField::from_fn(grid, Rank::Vector, |x, c| {
                0.3 * (1.0 + t * t) * if c == 0 { (x[0] + x[1]).sin() } else { x[0].cos() }
            })
        })
        .collect();
    let v = TimeSeriesField::uniform(1.0, samples)?;
    let flow = integrate_flow(&v)?;
    let j = jacobian_integral_form(&v, &flow);
    Ok(j.last().expect("at least one step").max_abs_diff(flow.jacobians().last().expect("at least one step")))
}

#[derive(Serialize)]
struct Fitted {
    estimate: String,
    constant: f64,
}

fn merge(into: &mut Vec<Fitted>, reports: &[InequalityReport]) {
    for r in reports {
        match into.iter_mut().find(|f| f.estimate == r.lemma_id) {
            Some(f) => f.constant = f.constant.max(r.fitted_constant),
            None => into.push(Fitted {
                estimate: r.lemma_id.clone(),
                constant: r.fitted_constant,
            }),
        }
    }
}

type TrialOutcome = (Vec<InequalityReport>, Vec<InequalityReport>, f64);

fn estimates(grid: Grid, partition: Partition, p: f64, e: &FlowEstimates, seed: u64, b: &mut ReportBundle) {
    let base = derive_seed(seed, 7);
    let trials: lagns_core::Result<Vec<TrialOutcome>> = (0..e.trials)
        .into_par_iter()
        .map(|t| {
            let s = derive_seed(base, t as u64);
            let v = ramp(&sized_field(grid, e.velocity_size, derive_seed(s, 0))?, e.horizon, e.steps)?;
            let w = ramp(&sized_field(grid, e.velocity_size, derive_seed(s, 1))?, e.horizon, e.steps)?;
            let est = flow_estimate_check(&v, &w, p, &partition, e.smallness)?;
            let v2 = v.map(|k, x| x.axpy(0.3, w.sample(k)));
            let diff = flow_difference_check(&v, &v2, p, &partition, e.smallness)?;
            Ok((est.reports, diff, est.certificate.integral))
        })
        .collect();
    let trials = match trials {
        Ok(t) => t,
        Err(err) => return b.gate(Gate::error("flow estimates hold", &err)),
    };
    let all_hold = trials.iter().all(|(a, d, _)| a.iter().chain(d).all(|r| r.holds()));
    let mut fitted = Vec::new();
    for (a, d, _) in &trials {
        merge(&mut fitted, a);
        merge(&mut fitted, d);
    }
    let worst_integral = trials.iter().map(|t| t.2).fold(0.0, f64::max);
    b.gate(Gate::check(
        "flow estimates hold",
        all_hold && fitted.iter().all(|f| f.constant.is_finite()),
        format!(
            "{} trials, smallness integral up to {worst_integral:.3e} <= {:.3e}",
            e.trials, e.smallness
        ),
    ));
    b.section("flow estimate constants", &fitted);

    let sweep = sized_field(grid, e.velocity_size, derive_seed(base, 1 << 20)).and_then(|v0| {
        let w0 = sized_field(grid, e.velocity_size, derive_seed(base, (1 << 20) + 1))?;
        flow_amplitude_sweep(
            &ramp(&v0, e.horizon, e.steps)?,
            &ramp(&w0, e.horizon, e.steps)?,
            &e.amplitudes,
            p,
            &partition,
        )
    });
    match sweep {
        Ok(s) => {
            for name in ["U3", "U4"] {
                let slope = s.slope(name).unwrap_or(f64::NAN);
                b.gate(Gate::at_most(
                    &format!("{name} quadratic slope"),
                    (slope - 2.0).abs(),
                    e.slope_tol,
                    format!("log-log slope {slope:.4} against the common amplitude of v and w"),
                ));
            }
            b.section("amplitude sweep", &s);
        }
        Err(err) => b.gate(Gate::error("U3 quadratic slope", &err)),
    }
}
