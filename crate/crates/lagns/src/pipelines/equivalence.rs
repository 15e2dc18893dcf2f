//! Maps the Lagrangian solution to Eulerian coordinates and checks that it
//! solves the Eulerian system to the discretization order.

use std::path::Path;

use lagns_core::eulerian::{eulerian_residual, invert_flow, lagrangian_residual, pull_back, to_eulerian};
use lagns_core::fixed_point::{picard_solve, reconstruct_density, Mode};
use lagns_core::{Rank, SpectralField, TimeSeriesField};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::solve::{default_solve, picard_config};
use crate::config::{EquivalenceConfig, Level, Scenario};
use crate::presets::build_problem;
use crate::report::{Gate, ReportBundle};
use crate::snapshot::write_snapshot;
use crate::table::ConvergenceTable;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MappedResiduals {
    pub n: usize,
    pub steps: usize,
    pub fixed_point_residual: f64,
    pub lagrangian_momentum: f64,
    pub eulerian_momentum: f64,
    pub eulerian_mass: f64,
    /// Largest `|pull_back(push_forward(probe)) - probe|`.
    pub round_trip: f64,
    pub inversion_iterations: usize,
    pub inversion_residual: f64,
}

/// Solves at one `(N, steps)` level and measures the Eulerian residuals of
/// the mapped solution.
pub fn mapped_residuals(
    sc: &Scenario,
    level: Level,
    radius: f64,
    horizon: f64,
    inversion_tol: f64,
    snapshots: Option<&Path>,
) -> anyhow::Result<MappedResiduals> {
    let [n, steps] = level;
    let grid = sc.grid.with_n(n).grid()?;
    let problem = build_problem(grid, &sc.problem)?;
    let s = sc.solve.clone().unwrap_or_else(|| default_solve(radius, horizon));
    let out = picard_solve(&problem, &picard_config(&s, Mode::General, radius, horizon, steps))?;
    let u_bar = &out.solution.u;
    let dens = reconstruct_density(u_bar, &problem)?;
    let lag = lagrangian_residual(&dens.rho, u_bar, &dens.flow, &problem)?;
    let change = invert_flow(&dens.flow, inversion_tol)?;
    let (rho, u) = to_eulerian(&dens.rho, u_bar, &change)?;
    let eul = eulerian_residual(&rho, &u, &problem.laws)?;

    let probe = SpectralField::from_fn(grid, Rank::Scalar, |x, _| (x[0] + 2.0 * x[1]).sin());
    let series = TimeSeriesField::new(u_bar.times().to_vec(), vec![probe.clone(); u_bar.len()])?;
    let (pushed, _) = to_eulerian(&series, u_bar, &change)?;
    let back = pull_back(&pushed, &dens.flow)?;
    let round_trip = back.samples().iter().map(|s| s.max_abs_diff(&probe)).fold(0.0, f64::max);

    if let Some(dir) = snapshots {
        write_snapshot(dir, &format!("n{n}_rho_eulerian_final"), rho.last(), horizon)?;
        write_snapshot(dir, &format!("n{n}_u_eulerian_final"), u.last(), horizon)?;
    }
    Ok(MappedResiduals {
        n,
        steps,
        fixed_point_residual: out.state.fixed_point_residual,
        lagrangian_momentum: lag.momentum.max(),
        eulerian_momentum: eul.momentum.max(),
        eulerian_mass: eul.mass.max(),
        round_trip,
        inversion_iterations: change.inverse.iter().map(|i| i.iterations).max().unwrap_or(0),
        inversion_residual: change.max_residual(),
    })
}

pub fn run(sc: &Scenario, out: &Path, b: &mut ReportBundle) -> anyhow::Result<()> {
    let e: EquivalenceConfig = sc.equivalence.clone().expect("validated");
    let snap_dir = out.join("snapshots");
    let rows: Vec<anyhow::Result<MappedResiduals>> = e
        .levels
        .par_iter()
        .map(|&l| {
            mapped_residuals(
                sc,
                l,
                e.radius,
                e.horizon,
                e.inversion_tol,
                e.snapshots.then_some(snap_dir.as_path()),
            )
        })
        .collect();
    let rows: Vec<MappedResiduals> = match rows.into_iter().collect() {
        Ok(r) => r,
        Err(err) => {
            b.gate(Gate::check("mapped solution", false, format!("{err:#}")));
            return Ok(());
        }
    };
    for (name, pick) in [
        ("eulerian momentum order", (|r: &MappedResiduals| r.eulerian_momentum) as fn(&MappedResiduals) -> f64),
        ("eulerian mass order", |r: &MappedResiduals| r.eulerian_mass),
    ] {
        let errs: Vec<f64> = rows.iter().map(pick).collect();
        match ConvergenceTable::new(name.trim_end_matches(" order"), &e.levels, &errs) {
            Ok(t) => {
                let worst = t
                    .orders()
                    .iter()
                    .map(|o| o.value().map_or(f64::INFINITY, |v| (v - e.target_order).abs()))
                    .fold(0.0, f64::max);
                b.gate(Gate::at_most(
                    name,
                    worst,
                    e.order_tol,
                    format!(
                        "largest |order - {}| under refinement; orders {:?}",
                        e.target_order,
                        t.orders().iter().filter_map(|o| o.value()).collect::<Vec<_>>()
                    ),
                ));
                b.section(&format!("{name} table"), t.to_markdown());
            }
            Err(err) => b.gate(Gate::error(name, &err)),
        }
    }
    let rt = rows.iter().map(|r| r.round_trip).fold(0.0, f64::max);
    b.gate(Gate::at_most(
        "lagrangian eulerian round trip",
        rt,
        e.round_trip_tol,
        "band-limited probe pushed forward and pulled back",
    ));
    b.section("levels", &rows);
    Ok(())
}
