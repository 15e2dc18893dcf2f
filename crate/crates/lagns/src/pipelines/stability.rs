//! Reproducibility and Lipschitz dependence of the solution on the data.

use lagns_core::fixed_point::{picard_solve, stability_sweep, Mode, Perturbation};
use lagns_core::{Rank, SpectralField};
use serde::Serialize;

use super::solve::{default_solve, picard_config};
use crate::config::Scenario;
use crate::presets::build_problem;
use crate::report::{Gate, ReportBundle};

#[derive(Serialize)]
struct Sweep<'a> {
    direction: &'a str,
    report: lagns_core::fixed_point::StabilityReport,
}

pub fn run(sc: &Scenario, b: &mut ReportBundle) -> anyhow::Result<()> {
    let st = sc.stability.clone().expect("validated");
    let grid = sc.grid.grid()?;
    let problem = match build_problem(grid, &sc.problem) {
        Ok(p) => p,
        Err(e) => {
            b.gate(Gate::error("problem setup", &e));
            return Ok(());
        }
    };
    let solve = sc.solve.clone().unwrap_or_else(|| default_solve(st.radius, st.horizon));
    let cfg = picard_config(&solve, Mode::General, st.radius, st.horizon, st.steps);

    let (first, second) = rayon::join(|| picard_solve(&problem, &cfg), || picard_solve(&problem, &cfg));
    match (first, second) {
        (Ok(a), Ok(c)) => {
            let same = a
                .solution
                .u
                .samples()
                .iter()
                .zip(c.solution.u.samples())
                .all(|(x, y)| x.values().iter().zip(y.values()).all(|(p, q)| p.to_bits() == q.to_bits()));
            b.gate(Gate::check(
                "bitwise rerun",
                same,
                format!("{} samples compared bit for bit", a.solution.u.len()),
            ));
        }
        (Err(e), _) | (_, Err(e)) => b.gate(Gate::error("bitwise rerun", &e)),
    }

    let dv = SpectralField::from_fn(grid, Rank::Vector, |x, c| match c {
        0 => (2.0 * x[0]).cos(),
        1 => x[1].sin(),
        _ => 0.0,
    });
    let dr = SpectralField::from_fn(grid, Rank::Scalar, |x, _| (x[0] - x[1]).sin());
    let (vel, den) = rayon::join(
        || stability_sweep(&problem, &Perturbation::Velocity(dv), &st.sizes, &cfg),
        || stability_sweep(&problem, &Perturbation::Density(dr), &st.sizes, &cfg),
    );
    let mut sweeps = Vec::new();
    for (name, r) in [("velocity", vel), ("density", den)] {
        let id = format!("lipschitz slope [{name}]");
        match r {
            Ok(rep) => {
                let detail = format!(
                    "slope {:.5} of |du|_Ep against perturbation size, constant {:.4e}, {} failed sizes",
                    rep.slope,
                    rep.lipschitz.fitted_constant,
                    rep.failures.len()
                );
                let dev = if rep.failures.is_empty() {
                    (rep.slope - st.target_slope).abs()
                } else {
                    f64::INFINITY
                };
                b.gate(Gate::at_most(&id, dev, st.slope_tol, detail));
                sweeps.push(Sweep {
                    direction: name,
                    report: rep,
                });
            }
            Err(e) => b.gate(Gate::error(&id, &e)),
        }
    }
    b.section("sweeps", &sweeps);
    Ok(())
}
